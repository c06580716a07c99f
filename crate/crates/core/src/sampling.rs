//! Collocation points: uniform interior and boundary samples, and a
//! three-strata interior scheme that concentrates points near `y = 0` and
//! `y = 1`.
//!
//! Randomness comes from ChaCha8 with one independent stream per consumer
//! (initialization, interior, boundary, pretraining, probes), all derived from
//! a single run seed.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Interior = 1,
    Boundary = 2,
    Pretrain = 3,
    Probe = 4,
}

/// Generator for one named stream of a run seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// `[0,1]` in 1D, `[0,L]×[0,1]` in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub length: f64,
}

impl Domain {
    pub fn interval() -> Self {
        Domain { dim: 1, length: 1.0 }
    }

    pub fn rectangle(length: f64) -> Self {
        Domain { dim: 2, length }
    }

    pub fn volume(&self) -> f64 {
        self.length
    }

    pub fn perimeter(&self) -> f64 {
        if self.dim == 1 {
            2.0
        } else {
            2.0 * self.length + 2.0
        }
    }

    pub fn contains_strict(&self, p: &[f64]) -> bool {
        match self.dim {
            1 => p[0] > 0.0 && p[0] < 1.0,
            _ => p[0] > 0.0 && p[0] < self.length && p[1] > 0.0 && p[1] < 1.0,
        }
    }

    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        match self.dim {
            1 => p[0].min(1.0 - p[0]),
            _ => p[0].min(self.length - p[0]).min(p[1]).min(1.0 - p[1]),
        }
    }
}

/// Which sides carry a Dirichlet condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// All of ∂Ω.
    Dirichlet,
    /// Only the vertical sides `x = 0` and `x = L`; horizontal sides free.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Uniform {
        interior: usize,
        boundary: usize,
    },
    /// Exactly `n1`, `n2`, `n3` points in the strata `y < y_split[0]`,
    /// `y_split[0] < y < y_split[1]`, `y > y_split[1]`.
    Stratified {
        n1: usize,
        n2: usize,
        n3: usize,
        boundary: usize,
        #[serde(default = "default_y_split")]
        y_split: [f64; 2],
    },
}

pub fn default_y_split() -> [f64; 2] {
    [0.15, 0.85]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub strategy: Strategy,
    #[serde(default = "default_true")]
    pub resample_every_iteration: bool,
}

fn default_true() -> bool {
    true
}

impl SamplingPlan {
    pub fn uniform(interior: usize, boundary: usize) -> Self {
        SamplingPlan {
            strategy: Strategy::Uniform { interior, boundary },
            resample_every_iteration: true,
        }
    }

    pub fn stratified(n1: usize, n2: usize, n3: usize, boundary: usize) -> Self {
        SamplingPlan {
            strategy: Strategy::Stratified {
                n1,
                n2,
                n3,
                boundary,
                y_split: default_y_split(),
            },
            resample_every_iteration: true,
        }
    }

    pub fn interior_count(&self) -> usize {
        match self.strategy {
            Strategy::Uniform { interior, .. } => interior,
            Strategy::Stratified { n1, n2, n3, .. } => n1 + n2 + n3,
        }
    }

    pub fn boundary_count(&self) -> usize {
        match self.strategy {
            Strategy::Uniform { boundary, .. } | Strategy::Stratified { boundary, .. } => boundary,
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if self.interior_count() == 0 {
            return Err(Error::config("sampling plan has no interior points"));
        }
        if let Strategy::Stratified { y_split: [a, b], .. } = self.strategy {
            if domain.dim != 2 {
                return Err(Error::config("stratified sampling needs a 2D domain"));
            }
            if !(0.0 < a && a < b && b < 1.0) {
                return Err(Error::config(format!("y_split must satisfy 0 < a < b < 1, got [{a}, {b}]")));
            }
        }
        if domain.dim == 2 && self.boundary_count() == 0 {
            return Err(Error::config("2D sampling plan has no boundary points"));
        }
        Ok(())
    }
}

fn open01<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(Open01)
}

/// Uniform on the open interval `(lo, hi)`.
fn uniform_open<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = lo + (hi - lo) * open01(rng);
        if v > lo && v < hi {
            return v;
        }
    }
}

pub fn sample_interior<R: Rng>(plan: &SamplingPlan, domain: &Domain, rng: &mut R) -> Array2<f64> {
    match (plan.strategy.clone(), domain.dim) {
        (Strategy::Uniform { interior, .. }, 1) => {
            Array2::from_shape_simple_fn((interior, 1), || uniform_open(rng, 0.0, 1.0))
        }
        (Strategy::Uniform { interior, .. }, _) => {
            let mut pts = Array2::zeros((interior, 2));
            for mut row in pts.rows_mut() {
                row[0] = uniform_open(rng, 0.0, domain.length);
                row[1] = uniform_open(rng, 0.0, 1.0);
            }
            pts
        }
        (Strategy::Stratified { n1, n2, n3, y_split: [a, b], .. }, _) => {
            let mut pts = Array2::zeros((n1 + n2 + n3, 2));
            let strata = [(n1, 0.0, a), (n2, a, b), (n3, b, 1.0)];
            let mut rows = pts.rows_mut().into_iter();
            for (count, lo, hi) in strata {
                for _ in 0..count {
                    let mut row = rows.next().expect("allocated");
                    row[0] = uniform_open(rng, 0.0, domain.length);
                    row[1] = uniform_open(rng, lo, hi);
                }
            }
            pts
        }
    }
}

/// Splits `total` over sides proportionally to `lengths` (largest remainder).
pub fn allocate_proportional(total: usize, lengths: &[f64]) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let quotas: Vec<f64> = lengths.iter().map(|l| total as f64 * l / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.partial_cmp(&fi).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Boundary collocation points on the constrained part of ∂Ω. In 1D these
/// are the two endpoints. In 2D the count is split over the constrained
/// sides in proportion to their length, ordered bottom, top, left, right.
pub fn sample_boundary<R: Rng>(
    plan: &SamplingPlan,
    domain: &Domain,
    kind: BoundaryKind,
    rng: &mut R,
) -> Array2<f64> {
    if domain.dim == 1 {
        return Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).expect("two endpoints");
    }
    let total = plan.boundary_count();
    let l = domain.length;
    let counts = match kind {
        BoundaryKind::Dirichlet => allocate_proportional(total, &[l, l, 1.0, 1.0]),
        BoundaryKind::Mixed => {
            let v = allocate_proportional(total, &[1.0, 1.0]);
            vec![0, 0, v[0], v[1]]
        }
    };
    let mut pts = Array2::zeros((total, 2));
    let mut rows = pts.rows_mut().into_iter();
    for (side, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let mut row = rows.next().expect("allocated");
            let (x, y) = match side {
                0 => (l * open01(rng), 0.0),
                1 => (l * open01(rng), 1.0),
                2 => (0.0, open01(rng)),
                _ => (l, open01(rng)),
            };
            row[0] = x;
            row[1] = y;
        }
    }
    pts
}

/// Position of a stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub word_pos: u128,
}

/// Interior and boundary streams of a training run.
#[derive(Debug, Clone)]
pub struct Sampler {
    interior: ChaCha8Rng,
    boundary: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            interior: stream_rng(seed, Stream::Interior),
            boundary: stream_rng(seed, Stream::Boundary),
        }
    }

    pub fn interior(&mut self, plan: &SamplingPlan, domain: &Domain) -> Array2<f64> {
        sample_interior(plan, domain, &mut self.interior)
    }

    pub fn boundary(&mut self, plan: &SamplingPlan, domain: &Domain, kind: BoundaryKind) -> Array2<f64> {
        sample_boundary(plan, domain, kind, &mut self.boundary)
    }

    pub fn positions(&self) -> [StreamPosition; 2] {
        [
            StreamPosition {
                word_pos: self.interior.get_word_pos(),
            },
            StreamPosition {
                word_pos: self.boundary.get_word_pos(),
            },
        ]
    }

    pub fn restore(seed: u64, positions: [StreamPosition; 2]) -> Self {
        let mut s = Sampler::new(seed);
        s.interior.set_word_pos(positions[0].word_pos);
        s.boundary.set_word_pos(positions[1].word_pos);
        s
    }
}
