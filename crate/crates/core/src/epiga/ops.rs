//! Genetic and epigenetic operators: nucleosome generation, nucleosome-
//! based reproduction, gene silencing, tournament selection, and elitist
//! replacement.
//!
//! Tie-breaks everywhere go to the lowest index; replacement prefers the
//! older generation on equal fitness.

use rand::Rng;

use super::types::{Cell, EpiGaError, GsProbabilities, Individual, NucleosomeMask, Population};
use crate::scalar::Real;
use crate::scenario::{clamp_repair, gene_specs, resample_gene, GENOME_LEN};

/// Generate a fresh nucleosome mask: each position fires with probability
/// `pr_n` and collapses the window `[k - radius, k + radius]`, clipped to
/// valid indices.
pub fn nucleosome_generation<R: Rng + ?Sized>(
    mask_len: usize,
    pr_n: f64,
    radius: usize,
    rng: &mut R,
) -> NucleosomeMask {
    let mut mask = NucleosomeMask::zeroed(mask_len);
    for k in 0..mask_len {
        if rng.gen::<f64>() < pr_n {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius).min(mask_len - 1);
            for j in lo..=hi {
                mask.collapse(j);
            }
        }
    }
    mask
}

/// Nucleosome-based reproduction of two cells without the final repair
/// step: offspring masks are the OR of the parent masks, collapsed
/// positions keep their genes, uncollapsed positions swap.
///
/// Kept separate from [`nbr`] so the gene-conservation property (the swap
/// is a positionwise permutation) can be checked prior to repair.
pub fn nbr_raw<S: Real>(c1: &Cell<S>, c2: &Cell<S>) -> Result<(Cell<S>, Cell<S>), EpiGaError> {
    if c1.mask.len() != GENOME_LEN || c2.mask.len() != GENOME_LEN {
        return Err(EpiGaError::Contract(format!(
            "nbr mask lengths {} / {} do not match genome length {GENOME_LEN}",
            c1.mask.len(),
            c2.mask.len()
        )));
    }
    let mask = c1.mask.or(&c2.mask)?;
    let mut x1 = *c1.solution.values();
    let mut x2 = *c2.solution.values();
    for j in 0..GENOME_LEN {
        if !mask.is_collapsed(j) {
            core::mem::swap(&mut x1[j], &mut x2[j]);
        }
    }
    let child = |values, parent: &Cell<S>| Cell {
        solution: crate::scenario::ScenarioGenome::from_values(values),
        mask: mask.clone(),
        fitness: None,
        features: parent.features,
    };
    Ok((child(x1, c1), child(x2, c2)))
}

/// Nucleosome-based reproduction with offspring genomes passed through
/// `clamp_repair`.
pub fn nbr<S: Real>(c1: &Cell<S>, c2: &Cell<S>) -> Result<(Cell<S>, Cell<S>), EpiGaError> {
    let (mut o1, mut o2) = nbr_raw(c1, c2)?;
    o1.solution = clamp_repair(o1.solution);
    o2.solution = clamp_repair(o2.solution);
    Ok((o1, o2))
}

/// Reproduce two individuals: NBR on their best cells, each offspring
/// cell replacing the worst cell of the respective parent. Returns the
/// offspring individuals together with the index of the replaced cell.
pub fn reproduce_individuals<S: Real>(
    i1: &Individual<S>,
    i2: &Individual<S>,
) -> Result<((Individual<S>, usize), (Individual<S>, usize)), EpiGaError> {
    if !i1.is_evaluated() || !i2.is_evaluated() {
        return Err(EpiGaError::Contract(
            "reproduce_individuals requires fully evaluated parents".into(),
        ));
    }
    let b1 = i1.best_cell_index().expect("evaluated individual has cells");
    let b2 = i2.best_cell_index().expect("evaluated individual has cells");
    let (c1, c2) = nbr(&i1.cells[b1], &i2.cells[b2])?;
    let w1 = i1.worst_cell_index().unwrap();
    let w2 = i2.worst_cell_index().unwrap();
    let mut o1 = i1.clone();
    let mut o2 = i2.clone();
    o1.cells[w1] = c1;
    o2.cells[w2] = c2;
    Ok(((o1, w1), (o2, w2)))
}

/// Gene silencing on one cell. For each collapsed position, the
/// epigenetic gate (`pr_e`) and the per-gene silencing probability decide
/// whether the gene is expressed, i.e. resampled uniformly from its
/// range. Returns the modified cell and the per-gene express flags.
pub fn gene_silencing<S: Real, R: Rng + ?Sized>(
    cell: &Cell<S>,
    pr_gs: &GsProbabilities<S>,
    pr_e: f64,
    rng: &mut R,
) -> (Cell<S>, [bool; GENOME_LEN]) {
    assert_eq!(cell.mask.len(), GENOME_LEN, "mask length must match genome");
    let mut out = cell.clone();
    let mut expressed = [false; GENOME_LEN];
    let specs = gene_specs();
    for j in 0..GENOME_LEN {
        if cell.mask.is_collapsed(j) && rng.gen::<f64>() < pr_e {
            let draw: S = crate::scalar::real(rng.gen::<f64>());
            if draw > pr_gs.silencing(j) {
                out.solution.set_value(j, resample_gene(&specs[j], rng));
                expressed[j] = true;
            }
        }
    }
    if expressed.iter().any(|&e| e) {
        out.solution = clamp_repair(out.solution);
    }
    (out, expressed)
}

/// Binary tournament: draw two distinct individuals uniformly, return the
/// index of the fitter one; exact ties are settled by a coin flip.
pub fn binary_tournament<S: Real, R: Rng + ?Sized>(
    pop: &Population<S>,
    rng: &mut R,
) -> Result<usize, EpiGaError> {
    let t = pop.size();
    if t < 2 {
        return Err(EpiGaError::Contract(format!(
            "binary tournament needs at least 2 individuals, got {t}"
        )));
    }
    let i = rng.gen_range(0..t);
    let mut j = rng.gen_range(0..t - 1);
    if j >= i {
        j += 1;
    }
    let fi = pop.individuals[i]
        .fitness()
        .ok_or_else(|| EpiGaError::Contract("tournament on unevaluated individual".into()))?;
    let fj = pop.individuals[j]
        .fitness()
        .ok_or_else(|| EpiGaError::Contract("tournament on unevaluated individual".into()))?;
    if fi < fj {
        Ok(i)
    } else if fj < fi {
        Ok(j)
    } else if rng.gen::<bool>() {
        Ok(i)
    } else {
        Ok(j)
    }
}

/// Elitist replacement: pool the old population with the offspring, keep
/// the best T. Ties prefer the older generation, then the lower index.
pub fn elitist_replacement<S: Real>(
    old: &Population<S>,
    offspring: &Population<S>,
) -> Result<Population<S>, EpiGaError> {
    if old.size() != offspring.size() {
        return Err(EpiGaError::Contract(format!(
            "replacement pools must match in size: {} vs {}",
            old.size(),
            offspring.size()
        )));
    }
    if !old.is_evaluated() || !offspring.is_evaluated() {
        return Err(EpiGaError::Contract("replacement requires evaluated populations".into()));
    }
    let mut pool: Vec<(S, u8, usize, &Individual<S>)> = Vec::with_capacity(2 * old.size());
    for (idx, ind) in old.individuals.iter().enumerate() {
        pool.push((ind.fitness().unwrap(), 0, idx, ind));
    }
    for (idx, ind) in offspring.individuals.iter().enumerate() {
        pool.push((ind.fitness().unwrap(), 1, idx, ind));
    }
    pool.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("fitness must be orderable")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(Population {
        individuals: pool.into_iter().take(old.size()).map(|(_, _, _, ind)| ind.clone()).collect(),
        generation: old.generation + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_uniform, ScenarioGenome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell_with(values: [f64; GENOME_LEN], bits: [bool; GENOME_LEN]) -> Cell<f64> {
        Cell {
            solution: ScenarioGenome::from_values(values),
            mask: NucleosomeMask::from_bits(bits.to_vec()),
            fitness: Some(1.0),
            features: None,
        }
    }

    #[test]
    fn ng_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero = nucleosome_generation(10, 0.0, 1, &mut rng);
        assert_eq!(zero.count_collapsed(), 0);
        let one = nucleosome_generation(10, 1.0, 1, &mut rng);
        assert_eq!(one.count_collapsed(), 10);
    }

    #[test]
    fn ng_window_clips_at_ends() {
        // With radius 2 and a single firing position at k=0 the window is
        // [0, 2]; there is no index -1 or len.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mask = nucleosome_generation(4, 0.5, 2, &mut rng);
            assert_eq!(mask.len(), 4);
        }
    }

    #[test]
    fn ng_collapse_frequency_matches_window_union() {
        // Position j is covered by windows centered at |k - j| <= R, so
        // its collapse probability is 1 - (1 - pr_n)^w with w = 3 for
        // interior positions and 2 at the ends (R = 1).
        let (pr_n, trials, len) = (0.2, 100_000u32, 10usize);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = vec![0u32; len];
        for _ in 0..trials {
            let mask = nucleosome_generation(len, pr_n, 1, &mut rng);
            for (j, hit) in hits.iter_mut().enumerate() {
                if mask.is_collapsed(j) {
                    *hit += 1;
                }
            }
        }
        for j in 0..len {
            let w = if j == 0 || j == len - 1 { 2 } else { 3 };
            let expect = 1.0 - (1.0 - pr_n).powi(w);
            let freq = hits[j] as f64 / trials as f64;
            let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!(
                (freq - expect).abs() < 4.0 * sigma + 1e-9,
                "pos {j}: freq {freq} vs expected {expect}"
            );
        }
    }

    #[test]
    fn nbr_all_collapsed_keeps_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: ScenarioGenome<f64> = sample_uniform(&mut rng);
        let b: ScenarioGenome<f64> = sample_uniform(&mut rng);
        let c1 = cell_with(*a.values(), [true; GENOME_LEN]);
        let c2 = cell_with(*b.values(), [true; GENOME_LEN]);
        let (o1, o2) = nbr(&c1, &c2).unwrap();
        assert_eq!(o1.solution, a);
        assert_eq!(o2.solution, b);
    }

    #[test]
    fn nbr_all_uncollapsed_swaps_fully() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: ScenarioGenome<f64> = sample_uniform(&mut rng);
        let b: ScenarioGenome<f64> = sample_uniform(&mut rng);
        let c1 = cell_with(*a.values(), [false; GENOME_LEN]);
        let c2 = cell_with(*b.values(), [false; GENOME_LEN]);
        let (o1, o2) = nbr(&c1, &c2).unwrap();
        assert_eq!(o1.solution, b);
        assert_eq!(o2.solution, a);
    }

    #[test]
    fn nbr_hand_trace() {
        // Four-position hand trace: n1=(1,0,0,0), n2=(0,0,1,0) gives
        // n=(1,0,1,0); positions 1 and 3 swap. Remaining positions carry
        // valid filler so the genome stays in range.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base: ScenarioGenome<f64> = sample_uniform(&mut rng);
        let mut av = *base.values();
        let mut bv = *base.values();
        // Use the pedestrian block (indices 3..7) as the four traced
        // positions a,b,c,d / e,f,g,h.
        let (a, b, c, d) = (1.0, 2.0, 0.5, -0.5);
        let (e, f, g, h) = (3.0, 4.0, -0.25, 0.25);
        av[3] = a;
        av[4] = b;
        av[5] = c;
        av[6] = d;
        bv[3] = e;
        bv[4] = f;
        bv[5] = g;
        bv[6] = h;
        let mut bits1 = [true; GENOME_LEN];
        let mut bits2 = [true; GENOME_LEN];
        bits1[3] = true;
        bits1[4] = false;
        bits1[5] = false;
        bits1[6] = false;
        bits2[3] = false;
        bits2[4] = false;
        bits2[5] = true;
        bits2[6] = false;
        let c1 = cell_with(av, bits1);
        let c2 = cell_with(bv, bits2);
        let (o1, o2) = nbr(&c1, &c2).unwrap();
        // n = (1,0,1,0) over the traced block.
        assert!(o1.mask.is_collapsed(3));
        assert!(!o1.mask.is_collapsed(4));
        assert!(o1.mask.is_collapsed(5));
        assert!(!o1.mask.is_collapsed(6));
        // x1' = (a, f, c, h); x2' = (e, b, g, d).
        assert_eq!(
            [o1.solution.value(3), o1.solution.value(4), o1.solution.value(5), o1.solution.value(6)],
            [a, f, c, h]
        );
        assert_eq!(
            [o2.solution.value(3), o2.solution.value(4), o2.solution.value(5), o2.solution.value(6)],
            [e, b, g, d]
        );
    }

    #[test]
    fn reproduce_replaces_worst_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |fit: f64, rng: &mut ChaCha8Rng| {
            let mut c = Cell::new(sample_uniform(rng));
            c.fitness = Some(fit);
            c.features = Some([0.0; crate::FEATURE_LEN]);
            c
        };
        let i1 = Individual::new(vec![mk(1.0, &mut rng), mk(3.0, &mut rng)]);
        let i2 = Individual::new(vec![mk(2.0, &mut rng), mk(0.5, &mut rng)]);
        let ((o1, w1), (o2, w2)) = reproduce_individuals(&i1, &i2).unwrap();
        assert_eq!(w1, 1); // 3.0 replaced
        assert_eq!(w2, 0); // 2.0 replaced
        assert!(o1.cells[w1].fitness.is_none());
        assert!(o2.cells[w2].fitness.is_none());
        // Untouched cells keep their evaluations.
        assert_eq!(o1.cells[0].fitness, Some(1.0));
        assert_eq!(o2.cells[1].fitness, Some(0.5));
    }

    #[test]
    fn reproduce_breaks_best_ties_by_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut a = Cell::new(sample_uniform(&mut rng));
        let mut b = Cell::new(sample_uniform(&mut rng));
        a.fitness = Some(1.0);
        b.fitness = Some(1.0);
        let ind = Individual::new(vec![a.clone(), b]);
        assert_eq!(ind.best_cell_index(), Some(0));
        assert_eq!(ind.worst_cell_index(), Some(0));
        let other = Individual::new(vec![a.clone(), a]);
        let ((o1, _), _) = reproduce_individuals(&ind, &other).unwrap();
        assert_eq!(o1.cells.len(), 2);
    }

    #[test]
    fn reproduce_rejects_unevaluated_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let i1: Individual<f64> = Individual::new(vec![Cell::new(sample_uniform(&mut rng))]);
        let i2: Individual<f64> = Individual::new(vec![Cell::new(sample_uniform(&mut rng))]);
        assert!(reproduce_individuals(&i1, &i2).is_err());
    }

    #[test]
    fn gs_ignores_uncollapsed_genes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell = cell_with(*sample_uniform::<f64, _>(&mut rng).values(), [false; GENOME_LEN]);
        for _ in 0..1_000 {
            let (out, expressed) =
                gene_silencing(&cell, &GsProbabilities::equal(0.0), 1.0, &mut rng);
            assert_eq!(out.solution, cell.solution);
            assert!(expressed.iter().all(|&e| !e));
        }
    }

    #[test]
    fn gs_closed_gate_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cell = cell_with(*sample_uniform::<f64, _>(&mut rng).values(), [true; GENOME_LEN]);
        for _ in 0..1_000 {
            let (out, _) = gene_silencing(&cell, &GsProbabilities::equal(0.0), 0.0, &mut rng);
            assert_eq!(out.solution, cell.solution);
        }
    }

    #[test]
    fn gs_full_express_resamples_uniformly() {
        // mask all ones, pr_e = 1, pr_gs = 0: every gene is resampled each
        // call; check the marginal of a numeric gene stays uniform.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cell = cell_with(*sample_uniform::<f64, _>(&mut rng).values(), [true; GENOME_LEN]);
        let trials = 10_000;
        let mut fog = Vec::with_capacity(trials);
        for _ in 0..trials {
            let (out, expressed) =
                gene_silencing(&cell, &GsProbabilities::equal(0.0), 1.0, &mut rng);
            assert!(expressed.iter().all(|&e| e));
            fog.push(out.solution.fog_density());
        }
        fog.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = fog.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, &x) in fog.iter().enumerate() {
            let cdf = x / 100.0;
            ks = ks.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        assert!(ks < 0.03, "fog marginal KS = {ks}");
    }

    fn pop_with_fitness(fits: &[f64]) -> Population<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let individuals = fits
            .iter()
            .map(|&f| {
                let mut c = Cell::new(sample_uniform(&mut rng));
                c.fitness = Some(f);
                Individual::new(vec![c])
            })
            .collect();
        Population { individuals, generation: 0 }
    }

    #[test]
    fn tournament_prefers_lower_fitness() {
        let pop = pop_with_fitness(&[0.5, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            assert_eq!(binary_tournament(&pop, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn tournament_ties_flip_a_fair_coin() {
        let pop = pop_with_fitness(&[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 10_000;
        let zeros = (0..trials)
            .filter(|_| binary_tournament(&pop, &mut rng).unwrap() == 0)
            .count();
        let freq = zeros as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.02, "tie frequency {freq}");
    }

    #[test]
    fn tournament_matches_rank_closed_form() {
        // Selection pressure: under distinct fitness, rank r (0 = best)
        // wins a uniformly drawn pair iff paired with a worse rank, so
        // P(select r) = 2 (T - 1 - r) / (T (T - 1)). Verified against a
        // brute-force enumeration of all pairs.
        let t = 20;
        let fits: Vec<f64> = (0..t).map(|i| i as f64).collect();
        let pop = pop_with_fitness(&fits);
        // Enumeration oracle.
        let mut wins = vec![0u32; t];
        for i in 0..t {
            for j in 0..t {
                if i != j {
                    wins[i.min(j)] += 1;
                }
            }
        }
        let total: u32 = wins.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let trials = 200_000;
        let mut counts = vec![0u32; t];
        for _ in 0..trials {
            counts[binary_tournament(&pop, &mut rng).unwrap()] += 1;
        }
        for r in 0..t {
            let expect = wins[r] as f64 / total as f64;
            let closed = 2.0 * (t - 1 - r) as f64 / (t * (t - 1)) as f64;
            assert!((expect - closed).abs() < 1e-12);
            let freq = counts[r] as f64 / trials as f64;
            let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!((freq - expect).abs() < 5.0 * sigma + 1e-9, "rank {r}: {freq} vs {expect}");
        }
    }

    #[test]
    fn tournament_requires_two() {
        let pop = pop_with_fitness(&[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!(binary_tournament(&pop, &mut rng).is_err());
    }

    #[test]
    fn replacement_keeps_the_best_t() {
        let old = pop_with_fitness(&[5.0, 1.0, 3.0, 4.0]);
        let better = pop_with_fitness(&[0.5, 0.1, 0.2, 0.3]);
        let next = elitist_replacement(&old, &better).unwrap();
        assert_eq!(next.individuals, better.individuals);
        assert_eq!(next.generation, 1);

        let worse = pop_with_fitness(&[50.0, 10.0, 30.0, 40.0]);
        let next = elitist_replacement(&old, &worse).unwrap();
        let mut expect = old.individuals.clone();
        expect.sort_by(|a, b| a.fitness().partial_cmp(&b.fitness()).unwrap());
        assert_eq!(next.individuals, expect);
    }

    #[test]
    fn replacement_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let t = 6;
            let old_f: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..10.0)).collect();
            let new_f: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..10.0)).collect();
            let old = pop_with_fitness(&old_f);
            let off = pop_with_fitness(&new_f);
            let next = elitist_replacement(&old, &off).unwrap();
            let mut pool: Vec<f64> = old_f.iter().chain(&new_f).copied().collect();
            pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let survived: Vec<f64> =
                next.individuals.iter().map(|i| i.fitness().unwrap()).collect();
            assert_eq!(survived, pool[..t].to_vec());
        }
    }

    #[test]
    fn replacement_ties_prefer_old_then_low_index() {
        let old = pop_with_fitness(&[2.0, 2.0]);
        let off = pop_with_fitness(&[2.0, 2.0]);
        let next = elitist_replacement(&old, &off).unwrap();
        assert_eq!(next.individuals, old.individuals);
    }
}
