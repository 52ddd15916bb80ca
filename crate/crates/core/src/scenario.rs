//! Scenario genome: the 10-parameter test input, its valid ranges, and
//! repair logic keeping genetic operators closed over the feasible set.
//!
//! Gene order is fixed (v1..v10) so expression-probability reports are
//! comparable across runs:
//!
//! | idx | name         | range                                    |
//! |-----|--------------|------------------------------------------|
//! | 0   | dis_lo_npc   | [-20, 20] m                              |
//! | 1   | dis_la_npc   | [-20, 20] m                              |
//! | 2   | behavior_npc | {KeepLane, ChangeRight, ChangeLeft}      |
//! | 3   | dis_lo_ped   | [-10, 10] m                              |
//! | 4   | dis_la_ped   | [-10, 10] m                              |
//! | 5   | o_x_ped      | [-1, 1]                                  |
//! | 6   | o_y_ped      | [-1, 1]                                  |
//! | 7   | v_ped        | [0.94, 1.43] m/s                         |
//! | 8   | angle_sun    | [-90, 90] deg                            |
//! | 9   | density_fog  | [0, 100] %                               |
//!
//! The NPC initial position must additionally lie at least
//! [`NPC_MIN_DISTANCE`] meters from the vehicle under test.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::scalar::{real, Real};

/// Number of genes in a scenario genome.
pub const GENOME_LEN: usize = 10;

/// Minimum initial distance between the NPC vehicle and the AVUT, meters.
pub const NPC_MIN_DISTANCE: f64 = 5.0;

/// Gene indices, named for readability at call sites.
pub mod gene {
    pub const NPC_LON: usize = 0;
    pub const NPC_LAT: usize = 1;
    pub const NPC_BEHAVIOR: usize = 2;
    pub const PED_LON: usize = 3;
    pub const PED_LAT: usize = 4;
    pub const PED_ORIENT_X: usize = 5;
    pub const PED_ORIENT_Y: usize = 6;
    pub const PED_SPEED: usize = 7;
    pub const SUN_ALTITUDE: usize = 8;
    pub const FOG_DENSITY: usize = 9;
}

/// Initial behavior of the NPC vehicle. Stored in the genome as the
/// integer code given here; operators treat the gene atomically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NpcBehavior {
    KeepLane,
    ChangeRight,
    ChangeLeft,
}

impl NpcBehavior {
    pub const ARITY: usize = 3;

    pub fn code(self) -> u8 {
        match self {
            NpcBehavior::KeepLane => 0,
            NpcBehavior::ChangeRight => 1,
            NpcBehavior::ChangeLeft => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NpcBehavior::KeepLane),
            1 => Some(NpcBehavior::ChangeRight),
            2 => Some(NpcBehavior::ChangeLeft),
            _ => None,
        }
    }
}

/// Kind of a gene: a bounded numeric range or a categorical code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneKind {
    Numeric { lo: f64, hi: f64 },
    Categorical { arity: usize },
}

/// Static description of one gene: position, kind, and canonical name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneSpec {
    pub index: usize,
    pub name: &'static str,
    pub kind: GeneKind,
}

const GENE_SPECS: [GeneSpec; GENOME_LEN] = [
    GeneSpec { index: 0, name: "dis_lo_npc", kind: GeneKind::Numeric { lo: -20.0, hi: 20.0 } },
    GeneSpec { index: 1, name: "dis_la_npc", kind: GeneKind::Numeric { lo: -20.0, hi: 20.0 } },
    GeneSpec { index: 2, name: "behavior_npc", kind: GeneKind::Categorical { arity: NpcBehavior::ARITY } },
    GeneSpec { index: 3, name: "dis_lo_ped", kind: GeneKind::Numeric { lo: -10.0, hi: 10.0 } },
    GeneSpec { index: 4, name: "dis_la_ped", kind: GeneKind::Numeric { lo: -10.0, hi: 10.0 } },
    GeneSpec { index: 5, name: "o_x_ped", kind: GeneKind::Numeric { lo: -1.0, hi: 1.0 } },
    GeneSpec { index: 6, name: "o_y_ped", kind: GeneKind::Numeric { lo: -1.0, hi: 1.0 } },
    GeneSpec { index: 7, name: "v_ped", kind: GeneKind::Numeric { lo: 0.94, hi: 1.43 } },
    GeneSpec { index: 8, name: "angle_sun", kind: GeneKind::Numeric { lo: -90.0, hi: 90.0 } },
    GeneSpec { index: 9, name: "density_fog", kind: GeneKind::Numeric { lo: 0.0, hi: 100.0 } },
];

/// The full gene table, in canonical v1..v10 order.
pub fn gene_specs() -> &'static [GeneSpec; GENOME_LEN] {
    &GENE_SPECS
}

/// Canonical parameter names in gene order (feed the embedding layer and
/// label CSV columns).
pub fn encode_names() -> [&'static str; GENOME_LEN] {
    let mut names = [""; GENOME_LEN];
    for (i, spec) in GENE_SPECS.iter().enumerate() {
        names[i] = spec.name;
    }
    names
}

/// Violation of a genome invariant, reported by [`ScenarioGenome::validate`].
#[derive(Debug, Clone, thiserror::Error)]
pub enum GenomeError {
    #[error("gene {index} ({name}) = {value} outside [{lo}, {hi}]")]
    OutOfRange { index: usize, name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("gene {index} ({name}) = {value} is not a valid category code (arity {arity})")]
    BadCategory { index: usize, name: &'static str, value: f64, arity: usize },
    #[error("npc initial distance {dist} below minimum {min}")]
    NpcTooClose { dist: f64, min: f64 },
}

/// A candidate test input: 9 numeric genes plus the categorical NPC
/// behavior, stored as a flat vector so operators can address genes by
/// position. The categorical gene holds its integer code as a scalar and
/// is never interpolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioGenome<S: Real> {
    values: [S; GENOME_LEN],
}

impl<S: Real> ScenarioGenome<S> {
    /// Wrap raw gene values without validation. Callers that want the
    /// invariants checked should follow with [`Self::validate`].
    pub fn from_values(values: [S; GENOME_LEN]) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[S; GENOME_LEN] {
        &self.values
    }

    pub fn value(&self, index: usize) -> S {
        self.values[index]
    }

    pub fn set_value(&mut self, index: usize, value: S) {
        self.values[index] = value;
    }

    pub fn npc_lon(&self) -> S {
        self.values[gene::NPC_LON]
    }

    pub fn npc_lat(&self) -> S {
        self.values[gene::NPC_LAT]
    }

    pub fn npc_behavior(&self) -> NpcBehavior {
        let code = self.values[gene::NPC_BEHAVIOR].to_u8().unwrap_or(0);
        NpcBehavior::from_code(code).unwrap_or(NpcBehavior::KeepLane)
    }

    pub fn ped_lon(&self) -> S {
        self.values[gene::PED_LON]
    }

    pub fn ped_lat(&self) -> S {
        self.values[gene::PED_LAT]
    }

    pub fn ped_orient(&self) -> (S, S) {
        (self.values[gene::PED_ORIENT_X], self.values[gene::PED_ORIENT_Y])
    }

    pub fn ped_speed(&self) -> S {
        self.values[gene::PED_SPEED]
    }

    pub fn sun_altitude(&self) -> S {
        self.values[gene::SUN_ALTITUDE]
    }

    pub fn fog_density(&self) -> S {
        self.values[gene::FOG_DENSITY]
    }

    /// Euclidean distance of the NPC's initial offset from the AVUT.
    pub fn npc_distance(&self) -> S {
        self.npc_lon().hypot(self.npc_lat())
    }

    /// Gene values rescaled to [0, 1] by their ranges (categorical code
    /// divided by arity - 1). This is the PV vector the value layer of
    /// the epigenetic model consumes.
    pub fn scaled_values(&self) -> [S; GENOME_LEN] {
        let mut out = [S::zero(); GENOME_LEN];
        for (i, spec) in GENE_SPECS.iter().enumerate() {
            out[i] = match spec.kind {
                GeneKind::Numeric { lo, hi } => {
                    (self.values[i] - real::<S>(lo)) / real::<S>(hi - lo)
                }
                GeneKind::Categorical { arity } => {
                    self.values[i] / real::<S>((arity - 1) as f64)
                }
            };
        }
        out
    }

    /// Check every genome invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), GenomeError> {
        for (i, spec) in GENE_SPECS.iter().enumerate() {
            let v = self.values[i].to_f64().unwrap_or(f64::NAN);
            match spec.kind {
                GeneKind::Numeric { lo, hi } => {
                    if !(lo..=hi).contains(&v) {
                        return Err(GenomeError::OutOfRange {
                            index: i,
                            name: spec.name,
                            value: v,
                            lo,
                            hi,
                        });
                    }
                }
                GeneKind::Categorical { arity } => {
                    let ok = (0..arity).any(|c| v == c as f64);
                    if !ok {
                        return Err(GenomeError::BadCategory {
                            index: i,
                            name: spec.name,
                            value: v,
                            arity,
                        });
                    }
                }
            }
        }
        let dist = self.npc_distance().to_f64().unwrap_or(f64::NAN);
        if dist < NPC_MIN_DISTANCE {
            return Err(GenomeError::NpcTooClose { dist, min: NPC_MIN_DISTANCE });
        }
        Ok(())
    }
}

/// Resample one gene uniformly within its range. This is the `Express`
/// operation used by gene silencing and the mutation kernel of the GA
/// baseline.
pub fn resample_gene<S: Real, R: Rng + ?Sized>(spec: &GeneSpec, rng: &mut R) -> S {
    match spec.kind {
        GeneKind::Numeric { lo, hi } => {
            Uniform::new_inclusive(real::<S>(lo), real::<S>(hi)).sample(rng)
        }
        GeneKind::Categorical { arity } => real::<S>(rng.gen_range(0..arity) as f64),
    }
}

/// Draw a genome uniformly from the feasible set. The NPC offset pair is
/// rejection-resampled until the 5 m distance constraint holds; the
/// feasible fraction is ~95%, so the attempt cap is unreachable in
/// practice and trips only on an RNG defect.
pub fn sample_uniform<S: Real, R: Rng + ?Sized>(rng: &mut R) -> ScenarioGenome<S> {
    let mut values = [S::zero(); GENOME_LEN];
    for (i, spec) in GENE_SPECS.iter().enumerate() {
        values[i] = resample_gene(spec, rng);
    }
    let mut genome = ScenarioGenome::from_values(values);
    let mut attempts = 0;
    while genome.npc_distance() < real::<S>(NPC_MIN_DISTANCE) {
        attempts += 1;
        assert!(attempts <= 10_000, "npc rejection sampling failed to terminate");
        genome.set_value(gene::NPC_LON, resample_gene(&GENE_SPECS[gene::NPC_LON], rng));
        genome.set_value(gene::NPC_LAT, resample_gene(&GENE_SPECS[gene::NPC_LAT], rng));
    }
    genome
}

/// Repair an arbitrary genome: clamp numeric genes to their bounds, leave
/// the categorical gene untouched, and push the NPC offset radially onto
/// the 5 m circle if it ended up inside. Idempotent and the identity on
/// valid genomes.
pub fn clamp_repair<S: Real>(mut genome: ScenarioGenome<S>) -> ScenarioGenome<S> {
    for (i, spec) in GENE_SPECS.iter().enumerate() {
        if let GeneKind::Numeric { lo, hi } = spec.kind {
            let v = genome.values[i];
            genome.values[i] = v.max(real::<S>(lo)).min(real::<S>(hi));
        }
    }
    let min_dist = real::<S>(NPC_MIN_DISTANCE);
    let r = genome.npc_distance();
    if r < min_dist {
        let (x, y) = (genome.npc_lon(), genome.npc_lat());
        let (mut nx, mut ny) = if r == S::zero() {
            // No direction to project along; land on the +x axis.
            (min_dist, S::zero())
        } else {
            let scale = min_dist / r;
            (x * scale, y * scale)
        };
        if nx.hypot(ny) < min_dist {
            // Rounding left the point marginally inside; inflate so that
            // a second repair pass is a no-op.
            let bump = S::one() + real::<S>(1e-9);
            nx = nx * bump;
            ny = ny * bump;
        }
        genome.values[gene::NPC_LON] = nx;
        genome.values[gene::NPC_LAT] = ny;
    }
    genome
}
