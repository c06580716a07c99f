//! Stored-energy densities, boundary data and the Monte Carlo training loss.
//!
//! The two-well density has wells at gradient `0` and `1` along the well
//! axis; the transverse gradient component is penalized quadratically.
//! Regularized variants add `(ε²/2)·(second derivative)²`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    forward_batch, loss_param_gradient, Integrand, InteriorTerm, Jet, JetOrder, MismatchTerm,
    ParamGradient,
};
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::sampling::{BoundaryKind, Domain};

/// Default midpoint quadrature resolution in 1D.
pub const QUAD_1D: usize = 2048;
/// Default midpoint quadrature resolution in 2D (`nx × ny`).
pub const QUAD_2D: (usize, usize) = (512, 256);

const BOUNDARY_TOL: f64 = 1e-12;
const QUAD_CHUNK: usize = 8192;

/// Which second derivative the rotated model penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegDirection {
    /// `nᵀ H n` along the rotated well axis.
    #[default]
    Normal,
    /// `u_xx`, as in the unrotated model.
    Xx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyModel {
    /// `∫₀¹ W(u')`, `W(z) = z²(1−z)²`, `u(0)=0`, `u(1)=γ`.
    OneD { gamma: f64 },
    /// `∫₀¹ W(u') + (ε²/2)(u'')²`.
    OneDReg { gamma: f64, eps: f64 },
    /// `∫ ½[u_x²(1−u_x)² + u_y²]` on `[0,L]×[0,1]`.
    TwoD {
        gamma: f64,
        length: f64,
        bc: BoundaryKind,
    },
    /// Two-well density plus `(ε²/2) u_xx²`, Dirichlet data `γx`.
    TwoDReg { gamma: f64, eps: f64, length: f64 },
    /// Well axis rotated to `n = (cos φ, sin φ)`, Dirichlet data `γ n·x`.
    Rotated {
        gamma: f64,
        phi: f64,
        eps: f64,
        length: f64,
        #[serde(default)]
        reg_direction: RegDirection,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_e: f64,
    pub loss_b: f64,
    pub total: f64,
}

/// Monte Carlo estimate of the energy with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[inline]
fn well(z: f64) -> f64 {
    let t = z * (1.0 - z);
    t * t
}

#[inline]
fn well_slope(z: f64) -> f64 {
    2.0 * z * (1.0 - z) * (1.0 - 2.0 * z)
}

#[inline]
fn two_well(p: f64, q: f64) -> f64 {
    0.5 * (well(p) + q * q)
}

impl EnergyModel {
    pub fn gamma(&self) -> f64 {
        match *self {
            EnergyModel::OneD { gamma }
            | EnergyModel::OneDReg { gamma, .. }
            | EnergyModel::TwoD { gamma, .. }
            | EnergyModel::TwoDReg { gamma, .. }
            | EnergyModel::Rotated { gamma, .. } => gamma,
        }
    }

    pub fn set_gamma(&mut self, value: f64) {
        match self {
            EnergyModel::OneD { gamma }
            | EnergyModel::OneDReg { gamma, .. }
            | EnergyModel::TwoD { gamma, .. }
            | EnergyModel::TwoDReg { gamma, .. }
            | EnergyModel::Rotated { gamma, .. } => *gamma = value,
        }
    }

    pub fn eps(&self) -> f64 {
        match *self {
            EnergyModel::OneD { .. } | EnergyModel::TwoD { .. } => 0.0,
            EnergyModel::OneDReg { eps, .. }
            | EnergyModel::TwoDReg { eps, .. }
            | EnergyModel::Rotated { eps, .. } => eps,
        }
    }

    pub fn domain(&self) -> Domain {
        match *self {
            EnergyModel::OneD { .. } | EnergyModel::OneDReg { .. } => Domain::interval(),
            EnergyModel::TwoD { length, .. }
            | EnergyModel::TwoDReg { length, .. }
            | EnergyModel::Rotated { length, .. } => Domain::rectangle(length),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim
    }

    pub fn boundary_kind(&self) -> BoundaryKind {
        match *self {
            EnergyModel::TwoD { bc, .. } => bc,
            _ => BoundaryKind::Dirichlet,
        }
    }

    /// Highest jet order the density depends on.
    pub fn jet_order(&self) -> JetOrder {
        if self.eps() == 0.0 {
            JetOrder::Gradient
        } else {
            JetOrder::Hessian
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("model {name} must be finite, got {v}")))
            }
        };
        finite("gamma", self.gamma())?;
        let eps = self.eps();
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::config(format!("model eps must be >= 0, got {eps}")));
        }
        let domain = self.domain();
        if !(domain.length > 0.0 && domain.length.is_finite()) {
            return Err(Error::config(format!("domain length must be > 0, got {}", domain.length)));
        }
        if let EnergyModel::Rotated { phi, .. } = *self {
            finite("phi", phi)?;
        }
        Ok(())
    }

    /// Energy density at a jet.
    pub fn density(&self, jet: &Jet) -> f64 {
        self.density_with_partials(jet).0
    }

    /// Density and its partial derivatives with respect to each jet component.
    pub fn density_with_partials(&self, jet: &Jet) -> (f64, Jet) {
        let mut d = Jet::zero(jet.dim);
        let value = match *self {
            EnergyModel::OneD { .. } => {
                let z = jet.grad[0];
                d.grad[0] = well_slope(z);
                well(z)
            }
            EnergyModel::OneDReg { eps, .. } => {
                let z = jet.grad[0];
                let h = jet.hess[0];
                d.grad[0] = well_slope(z);
                d.hess[0] = eps * eps * h;
                well(z) + 0.5 * eps * eps * h * h
            }
            EnergyModel::TwoD { .. } => {
                let (p, q) = (jet.grad[0], jet.grad[1]);
                d.grad = [0.5 * well_slope(p), q];
                two_well(p, q)
            }
            EnergyModel::TwoDReg { eps, .. } => {
                let (p, q) = (jet.grad[0], jet.grad[1]);
                let h = jet.hess[0];
                d.grad = [0.5 * well_slope(p), q];
                d.hess[0] = eps * eps * h;
                two_well(p, q) + 0.5 * eps * eps * h * h
            }
            EnergyModel::Rotated {
                phi,
                eps,
                reg_direction,
                ..
            } => {
                let (s, c) = phi.sin_cos();
                let (ux, uy) = (jet.grad[0], jet.grad[1]);
                let p = c * ux + s * uy;
                let q = -s * ux + c * uy;
                let (dp, dq) = (0.5 * well_slope(p), q);
                d.grad = [c * dp - s * dq, s * dp + c * dq];
                let h = match reg_direction {
                    RegDirection::Normal => c * c * jet.hess[0] + 2.0 * c * s * jet.hess[1] + s * s * jet.hess[2],
                    RegDirection::Xx => jet.hess[0],
                };
                let dh = eps * eps * h;
                d.hess = match reg_direction {
                    RegDirection::Normal => [dh * c * c, dh * 2.0 * c * s, dh * s * s],
                    RegDirection::Xx => [dh, 0.0, 0.0],
                };
                two_well(p, q) + 0.5 * eps * eps * h * h
            }
        };
        (value, d)
    }

    /// Prescribed value `g(x)` on the constrained boundary.
    pub fn boundary_value(&self, x: &[f64]) -> Result<f64> {
        let domain = self.domain();
        if x.len() != domain.dim {
            return Err(Error::Dimension {
                expected: domain.dim,
                got: x.len(),
            });
        }
        let near = |a: f64, b: f64| (a - b).abs() <= BOUNDARY_TOL;
        let off = || {
            Error::validation(
                format!("{x:?}"),
                "point is not on the constrained part of the boundary",
            )
        };
        let gamma = self.gamma();
        if domain.dim == 1 {
            return if near(x[0], 0.0) {
                Ok(0.0)
            } else if near(x[0], 1.0) {
                Ok(gamma)
            } else {
                Err(off())
            };
        }
        let l = domain.length;
        let inside = |v: f64, hi: f64| v >= -BOUNDARY_TOL && v <= hi + BOUNDARY_TOL;
        if !(inside(x[0], l) && inside(x[1], 1.0)) {
            return Err(off());
        }
        let vertical = near(x[0], 0.0) || near(x[0], l);
        let horizontal = near(x[1], 0.0) || near(x[1], 1.0);
        match (*self, self.boundary_kind()) {
            (_, BoundaryKind::Mixed) => {
                if near(x[0], 0.0) {
                    Ok(0.0)
                } else if near(x[0], l) {
                    Ok(gamma)
                } else {
                    Err(off())
                }
            }
            (EnergyModel::Rotated { phi, .. }, BoundaryKind::Dirichlet) if vertical || horizontal => {
                let (s, c) = phi.sin_cos();
                Ok(gamma * (c * x[0] + s * x[1]))
            }
            (_, BoundaryKind::Dirichlet) if vertical || horizontal => Ok(gamma * x[0]),
            _ => Err(off()),
        }
    }

    fn boundary_targets(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        points
            .rows()
            .into_iter()
            .map(|r| self.boundary_value(r.as_slice().expect("row")))
            .collect()
    }

    /// Weight of each boundary residual in `loss_b`: the two endpoint
    /// residuals are summed in 1D, boundary samples are averaged in 2D.
    fn boundary_scale(&self, n: usize) -> f64 {
        if self.dim() == 1 {
            1.0
        } else {
            1.0 / n as f64
        }
    }

    fn check_net(&self, net: &Mlp) -> Result<()> {
        if net.input_dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: net.input_dim(),
            });
        }
        Ok(())
    }
}

impl Integrand for EnergyModel {
    fn order(&self) -> JetOrder {
        self.jet_order()
    }

    fn eval(&self, jet: &Jet) -> (f64, Jet) {
        self.density_with_partials(jet)
    }
}

fn check_nonempty(points: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if points.nrows() == 0 {
        Err(Error::config(format!("empty {what} batch")))
    } else {
        Ok(())
    }
}

/// `loss_e = vol(Ω)·mean density`, `loss_b` = boundary mismatch, and
/// `total = loss_e + τ·loss_b`.
pub fn mc_loss(
    model: &EnergyModel,
    net: &Mlp,
    interior: ArrayView2<'_, f64>,
    boundary: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<LossBreakdown> {
    model.check_net(net)?;
    check_nonempty(interior, "interior")?;
    check_nonempty(boundary, "boundary")?;
    let loss_e = mc_energy(model, net, interior)?.value;
    let targets = model.boundary_targets(boundary)?;
    let values = forward_batch(net, boundary, JetOrder::Value)?;
    let sq: f64 = values
        .values()
        .iter()
        .zip(&targets)
        .map(|(u, g)| (u - g) * (u - g))
        .sum();
    let loss_b = model.boundary_scale(boundary.nrows()) * sq;
    Ok(LossBreakdown {
        loss_e,
        loss_b,
        total: loss_e + tau * loss_b,
    })
}

/// [`mc_loss`] together with the exact parameter gradient of `total`.
pub fn mc_loss_with_gradient(
    model: &EnergyModel,
    net: &Mlp,
    interior: ArrayView2<'_, f64>,
    boundary: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<(LossBreakdown, ParamGradient)> {
    model.check_net(net)?;
    check_nonempty(interior, "interior")?;
    check_nonempty(boundary, "boundary")?;
    let targets = model.boundary_targets(boundary)?;
    let domain = model.domain();
    let term = InteriorTerm {
        points: interior,
        scale: domain.volume() / interior.nrows() as f64,
        integrand: model,
    };
    let mismatch = MismatchTerm {
        points: boundary,
        targets: &targets,
        scale: model.boundary_scale(boundary.nrows()),
    };
    let lg = loss_param_gradient(net, Some(&term), Some((&mismatch, tau)))?;
    Ok((
        LossBreakdown {
            loss_e: lg.interior,
            loss_b: lg.mismatch,
            total: lg.total,
        },
        lg.grad,
    ))
}

/// `vol(Ω)·mean density` over `points`, with its standard error.
pub fn mc_energy(model: &EnergyModel, net: &Mlp, points: ArrayView2<'_, f64>) -> Result<McEstimate> {
    model.check_net(net)?;
    check_nonempty(points, "interior")?;
    let vol = model.domain().volume();
    let n = points.nrows();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for start in (0..n).step_by(QUAD_CHUNK) {
        let chunk = points.slice(ndarray::s![start..(start + QUAD_CHUNK).min(n), ..]);
        let jets = forward_batch(net, chunk, model.jet_order())?;
        for k in 0..jets.len() {
            let f = model.density(&jets.jet(k));
            sum += f;
            sum_sq += f * f;
        }
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    let value = vol * mean;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "energy estimate",
            iteration: None,
        });
    }
    Ok(McEstimate {
        value,
        std_error: vol * (var / nf).sqrt(),
    })
}

/// Quadrature resolution: `nx` cells in 1D, `nx × ny` in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub nx: usize,
    pub ny: usize,
}

impl Resolution {
    pub fn default_for(domain: &Domain) -> Self {
        if domain.dim == 1 {
            Resolution { nx: QUAD_1D, ny: 1 }
        } else {
            Resolution {
                nx: QUAD_2D.0,
                ny: QUAD_2D.1,
            }
        }
    }
}

/// Cell-midpoint nodes of a tensor grid over `domain`, row-major with `x`
/// varying fastest. In 1D `ny` is ignored.
pub fn midpoint_nodes(domain: &Domain, nx: usize, ny: usize) -> Array2<f64> {
    if domain.dim == 1 {
        let h = 1.0 / nx as f64;
        return Array2::from_shape_fn((nx, 1), |(i, _)| (i as f64 + 0.5) * h);
    }
    let hx = domain.length / nx as f64;
    let hy = 1.0 / ny as f64;
    let mut pts = Array2::zeros((nx * ny, 2));
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            pts[[k, 0]] = (i as f64 + 0.5) * hx;
            pts[[k, 1]] = (j as f64 + 0.5) * hy;
        }
    }
    pts
}

/// Deterministic midpoint-rule value of the energy functional.
pub fn quadrature_energy(model: &EnergyModel, net: &Mlp, resolution: Resolution) -> Result<f64> {
    let domain = model.domain();
    let ny = if domain.dim == 1 { 1 } else { resolution.ny };
    if resolution.nx < 16 || (domain.dim == 2 && ny < 16) {
        return Err(Error::config(format!(
            "quadrature needs at least 16 cells per axis, got {}x{}",
            resolution.nx, resolution.ny
        )));
    }
    let nodes = midpoint_nodes(&domain, resolution.nx, ny);
    // the midpoint rule is vol·mean over the nodes
    Ok(mc_energy(model, net, nodes.view())?.value)
}

/// Midpoint samples on the constrained boundary, `per_unit` points per unit
/// side length (two endpoints in 1D).
pub fn boundary_nodes(model: &EnergyModel, per_unit: usize) -> Array2<f64> {
    let domain = model.domain();
    if domain.dim == 1 {
        return Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).expect("endpoints");
    }
    let l = domain.length;
    let nh = ((per_unit as f64 * l).round() as usize).max(1);
    let nv = per_unit.max(1);
    let mut rows = Vec::new();
    if model.boundary_kind() == BoundaryKind::Dirichlet {
        for y in [0.0, 1.0] {
            rows.extend((0..nh).map(|i| [(i as f64 + 0.5) * l / nh as f64, y]));
        }
    }
    for x in [0.0, l] {
        rows.extend((0..nv).map(|j| [x, (j as f64 + 0.5) / nv as f64]));
    }
    Array2::from_shape_vec((rows.len(), 2), rows.concat()).expect("rows")
}

/// Boundary mismatch on the fixed [`boundary_nodes`] set, weighted like `loss_b`.
pub fn boundary_mismatch(model: &EnergyModel, net: &Mlp, per_unit: usize) -> Result<f64> {
    model.check_net(net)?;
    let nodes = boundary_nodes(model, per_unit);
    let targets = model.boundary_targets(nodes.view())?;
    let values = forward_batch(net, nodes.view(), JetOrder::Value)?;
    let sq: f64 = values
        .values()
        .iter()
        .zip(&targets)
        .map(|(u, g)| (u - g) * (u - g))
        .sum();
    Ok(model.boundary_scale(nodes.nrows()) * sq)
}
