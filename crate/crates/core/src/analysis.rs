//! Post-processing of trained fields: grid evaluation and export, and
//! microstructure metrics (bands, kinks, transition-layer widths, and
//! structural checks of 2D fields).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{forward_batch, JetOrder};
use crate::energy::{midpoint_nodes, EnergyModel};
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::sampling::Domain;

pub const CSV_HEADER: &str = "x,y,u,ux,uy,uxx";

/// Default band threshold, midway between the wells 0 and 1.
pub const BAND_THRESHOLD: f64 = 0.5;
pub const MIN_RUN: usize = 4;
pub const LAYER_LO: f64 = 0.1;
pub const LAYER_HI: f64 = 0.9;
/// Nodes closer than this to ∂Ω are excluded from the alignment metric.
pub const ALIGNMENT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNode {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
}

/// Field values on the cell midpoints of an `nx × ny` grid, row-major with
/// `x` varying fastest. In 1D `ny = 1` and `y`, `uy` are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    pub nodes: Vec<FieldNode>,
}

pub fn evaluate_grid(net: &Mlp, model: &EnergyModel, nx: usize, ny: usize) -> Result<FieldGrid> {
    let domain = model.domain();
    evaluate_on(net, &domain, nx, ny)
}

/// [`evaluate_grid`] for an explicit domain.
pub fn evaluate_on(net: &Mlp, domain: &Domain, nx: usize, ny: usize) -> Result<FieldGrid> {
    if net.input_dim() != domain.dim {
        return Err(Error::Dimension {
            expected: domain.dim,
            got: net.input_dim(),
        });
    }
    let ny = if domain.dim == 1 { 1 } else { ny };
    if nx < 2 || (domain.dim == 2 && ny < 2) {
        return Err(Error::config(format!("grid needs at least 2 nodes per axis, got {nx}x{ny}")));
    }
    let points = midpoint_nodes(domain, nx, ny);
    let jets = forward_batch(net, points.view(), JetOrder::Hessian)?;
    let nodes = (0..jets.len())
        .map(|k| {
            let jet = jets.jet(k);
            FieldNode {
                x: points[[k, 0]],
                y: if domain.dim == 2 { points[[k, 1]] } else { 0.0 },
                u: jet.value,
                ux: jet.grad[0],
                uy: jet.grad[1],
                uxx: jet.hess[0],
            }
        })
        .collect();
    Ok(FieldGrid {
        nx,
        ny,
        domain: *domain,
        nodes,
    })
}

impl FieldGrid {
    pub fn node(&self, i: usize, j: usize) -> &FieldNode {
        &self.nodes[j * self.nx + i]
    }

    pub fn cell_width(&self) -> f64 {
        self.domain.length / self.nx as f64
    }

    /// Row index whose `y` is nearest `y_line` (lower row on ties).
    pub fn nearest_row(&self, y_line: f64) -> usize {
        (0..self.ny)
            .min_by(|&a, &b| {
                let da = (self.node(0, a).y - y_line).abs();
                let db = (self.node(0, b).y - y_line).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0)
    }

    /// `(x, u_x)` along the row nearest `y_line`.
    pub fn slope_profile(&self, y_line: f64) -> Profile {
        let j = self.nearest_row(y_line);
        Profile {
            x: (0..self.nx).map(|i| self.node(i, j).x).collect(),
            slope: (0..self.nx).map(|i| self.node(i, j).ux).collect(),
            h: self.cell_width(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| [n.x, n.y, n.u, n.ux, n.uy, n.uxx].iter().all(|v| v.is_finite()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.nodes.len() * 96);
        s.push_str(CSV_HEADER);
        s.push('\n');
        for n in &self.nodes {
            writeln!(s, "{:?},{:?},{:?},{:?},{:?},{:?}", n.x, n.y, n.u, n.ux, n.uy, n.uxx).expect("string write");
        }
        s
    }

    /// Reads a grid written by [`FieldGrid::to_csv`]; grid sizes and the
    /// domain length are inferred from the node coordinates.
    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {line}"),
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(err(1, format!("expected header `{CSV_HEADER}`, found {other:?}"))),
        }
        let mut nodes = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(k + 2, e.to_string()))?;
            if vals.len() != 6 {
                return Err(err(k + 2, format!("expected 6 fields, found {}", vals.len())));
            }
            nodes.push(FieldNode {
                x: vals[0],
                y: vals[1],
                u: vals[2],
                ux: vals[3],
                uy: vals[4],
                uxx: vals[5],
            });
        }
        if nodes.len() < 2 {
            return Err(err(2, "grid has fewer than 2 nodes".into()));
        }
        let y0 = nodes[0].y;
        let nx = nodes.iter().position(|n| n.y != y0).unwrap_or(nodes.len());
        if nodes.len() % nx != 0 {
            return Err(err(2, format!("{} nodes do not form rows of {nx}", nodes.len())));
        }
        let ny = nodes.len() / nx;
        let dim = if ny == 1 { 1 } else { 2 };
        // first and last midpoints sum to L; snap away the rounding of the sum
        let length = ((nodes[0].x + nodes[nx - 1].x) * 1e12).round() / 1e12;
        let domain = if dim == 1 { Domain::interval() } else { Domain::rectangle(length) };
        for (k, n) in nodes.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            if n.x != nodes[i].x || n.y != nodes[j * nx].y {
                return Err(err(k + 2, "nodes are not a row-major tensor grid".into()));
            }
        }
        Ok(FieldGrid { nx, ny, domain, nodes })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FieldGrid::from_csv(&text, path)
    }
}

/// A slope profile along one grid line.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub x: Vec<f64>,
    pub slope: Vec<f64>,
    /// Node spacing.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub count: usize,
    pub intervals: Vec<(f64, f64)>,
}

impl Profile {
    /// Maximal runs of at least `min_run` nodes with slope above `threshold`,
    /// reported by their cell extents.
    pub fn bands(&self, threshold: f64, min_run: usize) -> Bands {
        let mut intervals = Vec::new();
        let n = self.slope.len();
        let mut i = 0;
        while i < n {
            if self.slope[i] > threshold {
                let start = i;
                while i < n && self.slope[i] > threshold {
                    i += 1;
                }
                if i - start >= min_run.max(1) {
                    intervals.push((self.x[start] - self.h / 2.0, self.x[i - 1] + self.h / 2.0));
                }
            } else {
                i += 1;
            }
        }
        Bands {
            count: intervals.len(),
            intervals,
        }
    }

    /// Segment indices `k` where the slope crosses `level` between nodes `k`
    /// and `k + 1`, with the direction (`true` = upward).
    fn crossings(&self, level: f64) -> Vec<(usize, bool)> {
        self.slope
            .windows(2)
            .enumerate()
            .filter_map(|(k, w)| {
                if w[0] <= level && w[1] > level {
                    Some((k, true))
                } else if w[0] > level && w[1] <= level {
                    Some((k, false))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn kinks(&self, threshold: f64) -> Kinks {
        let c = self.crossings(threshold);
        let up = c.iter().filter(|(_, u)| *u).count();
        Kinks { up, down: c.len() - up }
    }

    fn interp(&self, k: usize, level: f64) -> f64 {
        let (s0, s1) = (self.slope[k], self.slope[k + 1]);
        self.x[k] + (level - s0) / (s1 - s0) * (self.x[k + 1] - self.x[k])
    }

    /// Width of every transition through `threshold`, ordered by `x`: the
    /// distance between the nearest `lo` and `hi` level crossings bracketing
    /// it, linearly interpolated between nodes. Transitions whose bracket
    /// leaves the profile are skipped.
    pub fn layer_widths(&self, threshold: f64, lo: f64, hi: f64) -> Vec<f64> {
        let s = &self.slope;
        let mut widths = Vec::new();
        for (k, up) in self.crossings(threshold) {
            // the lower level lies on the left of an upward transition
            let (left_level, right_level) = if up { (lo, hi) } else { (hi, lo) };
            let below = |v: f64, level: f64| if up { v <= level } else { v > level };
            let above = |v: f64, level: f64| if up { v > level } else { v <= level };
            let left = (0..=k).rev().find(|&i| below(s[i], left_level));
            let right = (k + 1..s.len()).find(|&j| above(s[j], right_level));
            if let (Some(i), Some(j)) = (left, right) {
                let xl = self.interp(i, left_level);
                let xr = self.interp(j - 1, right_level);
                if xr > xl {
                    widths.push(xr - xl);
                }
            }
        }
        widths
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kinks {
    pub up: usize,
    pub down: usize,
}

fn require_dim(grid: &FieldGrid, dim: usize, what: &str) -> Result<()> {
    if grid.domain.dim != dim {
        return Err(Error::config(format!(
            "{what} needs a {dim}D field, got {}D",
            grid.domain.dim
        )));
    }
    Ok(())
}

pub fn count_bands(grid: &FieldGrid, y_line: f64, threshold: f64, min_run: usize) -> Bands {
    grid.slope_profile(y_line).bands(threshold, min_run)
}

pub fn count_kinks(grid: &FieldGrid, threshold: f64) -> Result<Kinks> {
    require_dim(grid, 1, "kink counting")?;
    Ok(grid.slope_profile(0.0).kinks(threshold))
}

/// Transition-layer widths of a 1D field, or along the mid-line of a 2D one.
pub fn layer_width(grid: &FieldGrid, lo: f64, hi: f64) -> Vec<f64> {
    grid.slope_profile(0.5).layer_widths(BAND_THRESHOLD, lo, hi)
}

/// Largest spread `max_y u − min_y u` over grid columns.
pub fn y_independence(grid: &FieldGrid) -> Result<f64> {
    require_dim(grid, 2, "y-independence")?;
    let mut worst: f64 = 0.0;
    for i in 0..grid.nx {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..grid.ny {
            let u = grid.node(i, j).u;
            lo = lo.min(u);
            hi = hi.max(u);
        }
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

/// Mean of `(−sin φ u_x + cos φ u_y)²` over nodes at least
/// [`ALIGNMENT_MARGIN`] away from ∂Ω.
pub fn interface_alignment(grid: &FieldGrid, phi: f64) -> Result<f64> {
    require_dim(grid, 2, "interface alignment")?;
    let (s, c) = phi.sin_cos();
    let (mut sum, mut n) = (0.0, 0usize);
    for node in &grid.nodes {
        if grid.domain.distance_to_boundary(&[node.x, node.y]) > ALIGNMENT_MARGIN {
            let q = -s * node.ux + c * node.uy;
            sum += q * q;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::config("grid has no nodes away from the boundary"));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrostructureReport {
    pub band_count: usize,
    pub band_intervals: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kink_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinks: Option<Kinks>,
    pub layer_widths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_independence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_energy: Option<f64>,
}

/// Every metric applicable to the grid's dimension. `kink_count` counts
/// transitions in both directions; the split is in `kinks`.
pub fn microstructure_report(grid: &FieldGrid, phi: Option<f64>, quad_energy: Option<f64>) -> Result<MicrostructureReport> {
    let bands = count_bands(grid, 0.5, BAND_THRESHOLD, MIN_RUN);
    let two_d = grid.domain.dim == 2;
    let kinks = if two_d { None } else { Some(count_kinks(grid, BAND_THRESHOLD)?) };
    Ok(MicrostructureReport {
        band_count: bands.count,
        band_intervals: bands.intervals,
        kink_count: kinks.map(|k| k.up + k.down),
        kinks,
        layer_widths: layer_width(grid, LAYER_LO, LAYER_HI),
        y_independence: if two_d { Some(y_independence(grid)?) } else { None },
        interface_alignment: match phi {
            Some(phi) if two_d => Some(interface_alignment(grid, phi)?),
            _ => None,
        },
        quad_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ActivationKind;
    use crate::network::Layer;
    use crate::sampling::BoundaryKind;
    use ndarray::array;

    fn synthetic_1d(nx: usize, slope: impl Fn(f64) -> f64) -> FieldGrid {
        let h = 1.0 / nx as f64;
        let nodes = (0..nx)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                FieldNode {
                    x,
                    y: 0.0,
                    u: 0.0,
                    ux: slope(x),
                    uy: 0.0,
                    uxx: 0.0,
                }
            })
            .collect();
        FieldGrid {
            nx,
            ny: 1,
            domain: Domain::interval(),
            nodes,
        }
    }

    fn synthetic_2d(nx: usize, ny: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> FieldGrid {
        let domain = Domain::rectangle(1.0);
        let pts = midpoint_nodes(&domain, nx, ny);
        let nodes = pts
            .rows()
            .into_iter()
            .map(|r| {
                let (u, ux) = f(r[0], r[1]);
                FieldNode {
                    x: r[0],
                    y: r[1],
                    u,
                    ux,
                    uy: 0.0,
                    uxx: 0.0,
                }
            })
            .collect();
        FieldGrid { nx, ny, domain, nodes }
    }

    fn exact_kink(gamma: f64, act: ActivationKind) -> Mlp {
        Mlp::from_layers(
            1,
            act,
            vec![
                Layer::new(array![[1.0]], array![gamma - 1.0]),
                Layer::new(array![[1.0]], array![0.0]),
            ],
        )
        .unwrap()
    }

    fn ramp_2d(gamma: f64, beta: f64) -> Mlp {
        Mlp::from_layers(
            2,
            ActivationKind::Linear,
            vec![
                Layer::new(array![[gamma, beta]], array![0.0]),
                Layer::new(array![[1.0]], array![0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_kink_slopes_are_wells() {
        let model = EnergyModel::OneD { gamma: 0.5 };
        let grid = evaluate_grid(&exact_kink(0.5, ActivationKind::Relu), &model, 101, 1).unwrap();
        assert!(grid.nodes.iter().all(|n| n.ux == 0.0 || n.ux == 1.0));
        assert_eq!(count_kinks(&grid, 0.5).unwrap(), Kinks { up: 1, down: 0 });
        let w = layer_width(&grid, LAYER_LO, LAYER_HI);
        assert_eq!(w.len(), 1);
        assert!(w[0] <= 2.0 * grid.cell_width());
    }

    #[test]
    fn ramp_field_values() {
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 1.0,
            bc: BoundaryKind::Dirichlet,
        };
        let grid = evaluate_grid(&ramp_2d(0.5, 0.0), &model, 16, 8).unwrap();
        for n in &grid.nodes {
            assert_eq!((n.ux, n.uy, n.uxx), (0.5, 0.0, 0.0));
        }
        assert_eq!(y_independence(&grid).unwrap(), 0.0);
        let tilted = evaluate_grid(&ramp_2d(0.5, 0.1), &model, 16, 8).unwrap();
        let expected = 0.1 * (1.0 - 1.0 / 8.0);
        assert!((y_independence(&tilted).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 2.0,
            bc: BoundaryKind::Mixed,
        };
        let net = Mlp::init(2, &[8, 8], ActivationKind::sm_relu(0.1), 3).unwrap();
        let grid = evaluate_grid(&net, &model, 12, 5).unwrap();
        let back = FieldGrid::from_csv(&grid.to_csv(), Path::new("g.csv")).unwrap();
        assert!(back == grid, "grid changed on re-import");
        let one = evaluate_grid(&exact_kink(0.3, ActivationKind::Tanh), &EnergyModel::OneD { gamma: 0.3 }, 7, 1).unwrap();
        assert!(FieldGrid::from_csv(&one.to_csv(), Path::new("g.csv")).unwrap() == one);
    }

    #[test]
    fn csv_errors_have_locations() {
        let e = FieldGrid::from_csv("a,b\n", Path::new("g.csv")).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        let e = FieldGrid::from_csv("x,y,u,ux,uy,uxx\n0.1,0,0,0,0,0\n0.2,0,zz,0,0,0\n", Path::new("g.csv")).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn minimal_grid_accepted() {
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 1.0,
            bc: BoundaryKind::Dirichlet,
        };
        assert_eq!(evaluate_grid(&ramp_2d(0.5, 0.0), &model, 2, 2).unwrap().nodes.len(), 4);
        assert!(evaluate_grid(&ramp_2d(0.5, 0.0), &model, 1, 2).is_err());
    }

    #[test]
    fn two_synthetic_bands() {
        let in_band = |x: f64| (0.2..0.4).contains(&x) || (0.6..0.8).contains(&x);
        for nx in [100, 200, 400] {
            let grid = synthetic_2d(nx, 10, |x, _| (0.0, if in_band(x) { 1.0 } else { 0.0 }));
            let bands = count_bands(&grid, 0.5, 0.5, 4);
            assert_eq!(bands.count, 2);
            assert!((bands.intervals[0].0 - 0.2).abs() < 1e-12 && (bands.intervals[1].1 - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_half_slope_has_no_band() {
        let grid = synthetic_2d(64, 8, |_, _| (0.0, 0.5));
        assert_eq!(count_bands(&grid, 0.5, 0.5, 4).count, 0);
    }

    #[test]
    fn five_band_laminate_invariant_under_refinement() {
        // ten equal cells alternating slope 1 and 0
        let lam = |x: f64| if ((x * 10.0).floor() as i64) % 2 == 0 { 1.0 } else { 0.0 };
        for nx in [100, 200, 400, 800] {
            let grid = synthetic_2d(nx, 4, |x, _| (0.0, lam(x)));
            assert_eq!(count_bands(&grid, 0.5, 0.5, 4).count, 5, "nx {nx}");
        }
    }

    #[test]
    fn short_runs_are_ignored() {
        let grid = synthetic_1d(100, |x| if (0.5..0.53).contains(&x) { 1.0 } else { 0.0 });
        assert_eq!(grid.slope_profile(0.0).bands(0.5, 4).count, 0);
        assert_eq!(grid.slope_profile(0.0).bands(0.5, 3).count, 1);
    }

    #[test]
    fn staircase_kinks() {
        let grid = synthetic_1d(200, |x| if (0.25..0.5).contains(&x) || x >= 0.75 { 1.0 } else { 0.0 });
        assert_eq!(count_kinks(&grid, 0.5).unwrap(), Kinks { up: 2, down: 1 });
        let w = layer_width(&grid, LAYER_LO, LAYER_HI);
        assert_eq!(w.len(), 3);
        let ramp = synthetic_1d(200, |_| 0.3);
        assert_eq!(count_kinks(&ramp, 0.5).unwrap(), Kinks { up: 0, down: 0 });
        assert!(layer_width(&ramp, LAYER_LO, LAYER_HI).is_empty());
    }

    #[test]
    fn kinks_rejected_on_2d() {
        let grid = synthetic_2d(8, 8, |_, _| (0.0, 0.0));
        assert!(count_kinks(&grid, 0.5).is_err());
        let one = synthetic_1d(8, |_| 0.0);
        assert!(y_independence(&one).is_err());
    }

    /// Standard normal cdf via the complementary error function series.
    fn phi_cdf(z: f64) -> f64 {
        use statrs::function::erf::erfc;
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    #[test]
    fn smooth_step_width_matches_closed_form() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let (c, w) = (0.4, 0.03);
        let grid = synthetic_1d(4000, |x| phi_cdf((x - c) / w));
        let n = Normal::standard();
        let expected = w * (n.inverse_cdf(LAYER_HI) - n.inverse_cdf(LAYER_LO));
        let got = layer_width(&grid, LAYER_LO, LAYER_HI);
        assert_eq!(got.len(), 1);
        assert!((got[0] - expected).abs() < 1e-5, "{} vs {expected}", got[0]);
    }

    #[test]
    fn smrelu_kink_width_is_linear_in_rho() {
        let mut widths = Vec::new();
        let rhos = [0.05, 0.1, 0.2];
        for rho in rhos {
            let net = exact_kink(0.5, ActivationKind::sm_relu(rho));
            let grid = evaluate_grid(&net, &EnergyModel::OneD { gamma: 0.5 }, 4000, 1).unwrap();
            let w = layer_width(&grid, LAYER_LO, LAYER_HI);
            assert_eq!(w.len(), 1);
            // u' = (1 + t/√(t²+ρ²))/2 hits 0.1 and 0.9 at t = ∓4ρ/3
            assert!((w[0] - 8.0 * rho / 3.0).abs() < 1e-6, "{} {}", w[0], rho);
            widths.push(w[0]);
        }
        let slope = (widths[2] - widths[0]) / (rhos[2] - rhos[0]);
        assert!((slope / (8.0 / 3.0) - 1.0).abs() < 0.2);
    }

    #[test]
    fn zero_y_column_gives_exact_independence() {
        let mut net = Mlp::init(2, &[8, 8], ActivationKind::Tanh, 9).unwrap();
        net.layers_mut()[0].weights.column_mut(1).fill(0.0);
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 1.0,
            bc: BoundaryKind::Mixed,
        };
        let grid = evaluate_grid(&net, &model, 32, 16).unwrap();
        assert_eq!(y_independence(&grid).unwrap(), 0.0);
    }

    #[test]
    fn alignment_of_rotated_ramp() {
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 1.0,
            bc: BoundaryKind::Dirichlet,
        };
        for phi in [0.0, 0.3, std::f64::consts::FRAC_PI_8] {
            let (s, c) = f64::sin_cos(phi);
            let grid = evaluate_grid(&ramp_2d(0.5 * c, 0.5 * s), &model, 32, 32).unwrap();
            assert!(interface_alignment(&grid, phi).unwrap() < 1e-30);
        }
        let grid = evaluate_grid(&ramp_2d(0.0, 0.3), &model, 32, 32).unwrap();
        assert!((interface_alignment(&grid, 0.0).unwrap() - 0.09).abs() < 1e-14);
    }

    #[test]
    fn report_fields_by_dimension() {
        let one = evaluate_grid(&exact_kink(0.5, ActivationKind::Relu), &EnergyModel::OneD { gamma: 0.5 }, 100, 1).unwrap();
        let r = microstructure_report(&one, None, Some(0.0)).unwrap();
        assert_eq!(r.kink_count, Some(1));
        assert_eq!(r.band_count, r.band_intervals.len());
        assert!(r.y_independence.is_none());
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MicrostructureReport>(&s).unwrap(), r);
        let two = synthetic_2d(100, 8, |x, _| (0.0, if (0.2..0.4).contains(&x) { 1.0 } else { 0.0 }));
        let r = microstructure_report(&two, Some(0.0), None).unwrap();
        assert_eq!(r.band_count, 1);
        assert!(r.kink_count.is_none());
        assert_eq!(r.y_independence, Some(0.0));
    }
}
