//! Batched jet propagation and its adjoint.
//!
//! All channels of a batch are stacked vertically into one matrix of shape
//! `(channels · n) × width`, channel `c` occupying rows `c·n .. (c+1)·n`, so
//! each affine layer is a single matrix product for the whole batch. Each row
//! still depends on its own collocation point only.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::jet::{hess_pairs, Jet, JetOrder};
use crate::error::{Error, Result};
use crate::network::Mlp;

/// Derivatives of a scalar loss with respect to every network parameter,
/// laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        ParamGradient {
            weights: net.layers().iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers().iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// Blocks in the same canonical order as [`Mlp::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                [
                    w.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn is_congruent(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers().len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(net.layers())
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Network output channels for a batch: row `c`, column `k` is channel `c`
/// of the jet at point `k`.
#[derive(Debug, Clone)]
pub struct BatchJets {
    pub dim: usize,
    pub order: JetOrder,
    pub channels: Array2<f64>,
}

impl BatchJets {
    pub fn len(&self) -> usize {
        self.channels.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> ndarray::ArrayView1<'_, f64> {
        self.channels.row(0)
    }

    /// Jet at point `k`; channels beyond the carried order are zero.
    pub fn jet(&self, k: usize) -> Jet {
        let mut jet = Jet::zero(self.dim);
        jet.value = self.channels[[0, k]];
        if self.order >= JetOrder::Gradient {
            for i in 0..self.dim {
                jet.grad[i] = self.channels[[1 + i, k]];
            }
        }
        if self.order >= JetOrder::Hessian {
            for p in 0..hess_pairs(self.dim).len() {
                jet.hess[p] = self.channels[[1 + self.dim + p, k]];
            }
        }
        jet
    }
}

struct HiddenRecord {
    /// Stacked layer input.
    input: Array2<f64>,
    /// Stacked pre-activations.
    pre: Array2<f64>,
    /// σ', σ'', σ''' at the value channel of `pre`, each `n × width` row-major.
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

struct Tape {
    n: usize,
    dim: usize,
    order: JetOrder,
    hidden: Vec<HiddenRecord>,
    /// Stacked input of the output layer.
    last_input: Array2<f64>,
}

fn stacked_input(points: ArrayView2<'_, f64>, order: JetOrder) -> Array2<f64> {
    let (n, dim) = points.dim();
    let channels = order.channels(dim);
    let mut x = Array2::zeros((channels * n, dim));
    x.slice_mut(s![0..n, ..]).assign(&points);
    if order >= JetOrder::Gradient {
        for i in 0..dim {
            x.slice_mut(s![(1 + i) * n..(2 + i) * n, i]).fill(1.0);
        }
    }
    x
}

fn check_points(net: &Mlp, points: ArrayView2<'_, f64>) -> Result<()> {
    if points.ncols() != net.input_dim() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            got: points.ncols(),
        });
    }
    if points.nrows() == 0 {
        return Err(Error::config("empty collocation batch"));
    }
    Ok(())
}

/// Products of thin matrices may come back column-major; everything
/// downstream indexes raw row-major slices.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Below this inner or outer size the packed gemm kernel costs more than it
/// saves (input layers of width 1-2, the scalar output layer).
const THIN: usize = 2;

fn both_standard(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.is_standard_layout() && b.is_standard_layout()
}

fn rows(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// `a · bᵀ`.
fn mul_nt(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.nrows();
    if k > THIN && n > THIN || !both_standard(a, b) {
        return standard(a.dot(&b.t()));
    }
    let (a, b) = (rows(a), rows(b));
    let mut out = vec![0.0; m * n];
    for (i, o) in out.chunks_exact_mut(n).enumerate() {
        let ai = &a[i * k..(i + 1) * k];
        for (j, v) in o.iter_mut().enumerate() {
            *v = ai.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
        }
    }
    Array2::from_shape_vec((m, n), out).expect("product shape")
}

/// `aᵀ · b`.
fn mul_tn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (r, m) = a.dim();
    let n = b.ncols();
    if m > THIN && n > THIN || !both_standard(a, b) {
        return standard(a.t().dot(b));
    }
    let (a, b) = (rows(a), rows(b));
    let mut out = vec![0.0; m * n];
    for t in 0..r {
        let bt = &b[t * n..(t + 1) * n];
        for (i, &x) in a[t * m..(t + 1) * m].iter().enumerate() {
            for (o, y) in out[i * n..(i + 1) * n].iter_mut().zip(bt) {
                *o += x * y;
            }
        }
    }
    Array2::from_shape_vec((m, n), out).expect("product shape")
}

/// `a · b`.
fn mul_nn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    if k > THIN && n > THIN || !both_standard(a, b) {
        return standard(a.dot(b));
    }
    let (a, b) = (rows(a), rows(b));
    let mut out = vec![0.0; m * n];
    for (i, o) in out.chunks_exact_mut(n).enumerate() {
        for (t, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (v, y) in o.iter_mut().zip(&b[t * n..(t + 1) * n]) {
                *v += x * y;
            }
        }
    }
    Array2::from_shape_vec((m, n), out).expect("product shape")
}

fn affine(input: &Array2<f64>, layer: &crate::network::Layer, n: usize) -> Array2<f64> {
    let mut z = mul_nt(input, &layer.weights);
    z.slice_mut(s![0..n, ..])
        .rows_mut()
        .into_iter()
        .for_each(|mut row| row += &layer.bias);
    z
}

/// Applies the activation channelwise to stacked pre-activations.
fn activate(
    pre: &Array2<f64>,
    act: crate::autodiff::ActivationKind,
    n: usize,
    dim: usize,
    order: JetOrder,
    keep: bool,
) -> (Array2<f64>, [Vec<f64>; 3]) {
    use crate::autodiff::ActivationKind as A;
    // one dispatch per layer so the elementwise loop is monomorphic
    match act {
        A::Relu => activate_with(pre, n, dim, order, keep, |x| A::Relu.derivatives(x)),
        A::LeakyRelu { slope } => activate_with(pre, n, dim, order, keep, |x| A::LeakyRelu { slope }.derivatives(x)),
        A::Sigmoid => activate_with(pre, n, dim, order, keep, |x| A::Sigmoid.derivatives(x)),
        A::Tanh => activate_with(pre, n, dim, order, keep, |x| A::Tanh.derivatives(x)),
        A::SmRelu { rho } => activate_with(pre, n, dim, order, keep, |x| A::SmRelu { rho }.derivatives(x)),
        A::Linear => activate_with(pre, n, dim, order, keep, |x| A::Linear.derivatives(x)),
    }
}

#[inline(always)]
fn activate_with(
    pre: &Array2<f64>,
    n: usize,
    dim: usize,
    order: JetOrder,
    keep: bool,
    derivatives: impl Fn(f64) -> [f64; 4],
) -> (Array2<f64>, [Vec<f64>; 3]) {
    let width = pre.ncols();
    let nw = n * width;
    let z = pre.as_slice().expect("standard layout");
    let mut a = vec![0.0; z.len()];
    let mut d = [Vec::new(), Vec::new(), Vec::new()];
    if keep {
        for v in d.iter_mut() {
            v.reserve_exact(nw);
        }
    }
    let pairs = hess_pairs(dim);
    for idx in 0..nw {
        let [s0, s1, s2, s3] = derivatives(z[idx]);
        a[idx] = s0;
        if order >= JetOrder::Gradient {
            for i in 0..dim {
                let c = (1 + i) * nw + idx;
                a[c] = s1 * z[c];
            }
        }
        if order >= JetOrder::Hessian {
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let c = (1 + dim + p) * nw + idx;
                a[c] = s1 * z[c] + s2 * z[(1 + i) * nw + idx] * z[(1 + j) * nw + idx];
            }
        }
        if keep {
            d[0].push(s1);
            d[1].push(s2);
            d[2].push(s3);
        }
    }
    let out = Array2::from_shape_vec(pre.raw_dim(), a).expect("same shape");
    (out, d)
}

fn forward(net: &Mlp, points: ArrayView2<'_, f64>, order: JetOrder, record: bool) -> (BatchJets, Option<Tape>) {
    let (n, dim) = points.dim();
    let act = net.activation();
    let layers = net.layers();
    let mut x = stacked_input(points, order);
    let mut hidden = Vec::with_capacity(layers.len() - 1);
    for layer in &layers[..layers.len() - 1] {
        let pre = affine(&x, layer, n);
        let (a, [d1, d2, d3]) = activate(&pre, act, n, dim, order, record);
        if record {
            hidden.push(HiddenRecord {
                input: std::mem::replace(&mut x, a),
                pre,
                d1,
                d2,
                d3,
            });
        } else {
            x = a;
        }
    }
    let out = affine(&x, layers.last().expect("output layer"), n);
    let channels = out
        .into_shape_with_order((order.channels(dim), n))
        .expect("output is one column");
    let jets = BatchJets { dim, order, channels };
    let tape = record.then(|| Tape {
        n,
        dim,
        order,
        hidden,
        last_input: x,
    });
    (jets, tape)
}

/// Output jets of `net` at every row of `points` (shape `n × input_dim`).
pub fn forward_batch(net: &Mlp, points: ArrayView2<'_, f64>, order: JetOrder) -> Result<BatchJets> {
    check_points(net, points)?;
    Ok(forward(net, points, order, false).0)
}

/// Adjoint of [`activate`]: maps the stacked adjoint of the activation output
/// to the adjoint of the pre-activations.
fn activate_adjoint(abar: &Array2<f64>, rec: &HiddenRecord, n: usize, dim: usize, order: JetOrder) -> Array2<f64> {
    let width = abar.ncols();
    let nw = n * width;
    let ab = abar.as_slice().expect("standard layout");
    let z = rec.pre.as_slice().expect("standard layout");
    let mut out = Array2::zeros(abar.raw_dim());
    let zb = out.as_slice_mut().expect("standard layout");
    let pairs = hess_pairs(dim);
    for idx in 0..nw {
        let (s1, s2, s3) = (rec.d1[idx], rec.d2[idx], rec.d3[idx]);
        let mut vbar = ab[idx] * s1;
        if order >= JetOrder::Gradient {
            for i in 0..dim {
                let c = (1 + i) * nw + idx;
                vbar += s2 * ab[c] * z[c];
                zb[c] = ab[c] * s1;
            }
        }
        if order >= JetOrder::Hessian {
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let c = (1 + dim + p) * nw + idx;
                let hbar = ab[c];
                let gi = z[(1 + i) * nw + idx];
                let gj = z[(1 + j) * nw + idx];
                vbar += hbar * (s3 * gi * gj + s2 * z[c]);
                zb[c] = hbar * s1;
                if i == j {
                    zb[(1 + i) * nw + idx] += 2.0 * s2 * hbar * gi;
                } else {
                    zb[(1 + i) * nw + idx] += s2 * hbar * gj;
                    zb[(1 + j) * nw + idx] += s2 * hbar * gi;
                }
            }
        }
        zb[idx] = vbar;
    }
    out
}

/// Reverse sweep. `out_adjoint` has shape `channels × n` and holds the loss
/// derivative with respect to each output channel at each point.
fn backward(net: &Mlp, tape: &Tape, out_adjoint: Array2<f64>) -> ParamGradient {
    let n = tape.n;
    let layers = net.layers();
    let mut grad = ParamGradient::zeros_like(net);
    let channels = out_adjoint.nrows();
    let mut zbar = out_adjoint
        .into_shape_with_order((channels * n, 1))
        .expect("contiguous adjoint");
    let last = layers.len() - 1;
    for l in (0..=last).rev() {
        let input = if l == last { &tape.last_input } else { &tape.hidden[l].input };
        grad.weights[l] = mul_tn(&zbar, input);
        grad.biases[l] = zbar.slice(s![0..n, ..]).sum_axis(Axis(0));
        if l > 0 {
            let abar = mul_nn(&zbar, &layers[l].weights);
            zbar = activate_adjoint(&abar, &tape.hidden[l - 1], n, tape.dim, tape.order);
        }
    }
    grad
}

/// Pointwise integrand over the interior batch: returns the density and its
/// partial derivatives with respect to each jet component (packed like the jet).
pub trait Integrand {
    fn order(&self) -> JetOrder;
    fn eval(&self, jet: &Jet) -> (f64, Jet);
}

/// `scale · Σ_k f(jet(x_k))` over interior points.
pub struct InteriorTerm<'a, I: Integrand> {
    pub points: ArrayView2<'a, f64>,
    pub scale: f64,
    pub integrand: &'a I,
}

/// `scale · Σ_k (F(x_k) − target_k)²` over boundary (or fitting) points.
pub struct MismatchTerm<'a> {
    pub points: ArrayView2<'a, f64>,
    pub targets: &'a [f64],
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    /// Interior term value.
    pub interior: f64,
    /// Mismatch term value, before weighting.
    pub mismatch: f64,
    /// `interior + weight · mismatch`.
    pub total: f64,
    pub grad: ParamGradient,
}

/// Loss `interior + weight · mismatch` and its exact gradient with respect to
/// all weights and biases (forward jets, then a reverse sweep through them).
pub fn loss_param_gradient<I: Integrand>(
    net: &Mlp,
    interior: Option<&InteriorTerm<'_, I>>,
    mismatch: Option<(&MismatchTerm<'_>, f64)>,
) -> Result<LossGradient> {
    if interior.is_none() && mismatch.is_none() {
        return Err(Error::config("loss has no terms"));
    }
    let mut grad = ParamGradient::zeros_like(net);
    let mut interior_value = 0.0;
    if let Some(term) = interior {
        check_points(net, term.points)?;
        let order = term.integrand.order();
        let (jets, tape) = forward(net, term.points, order, true);
        let tape = tape.expect("recorded");
        let n = jets.len();
        let mut adj = Array2::zeros(jets.channels.raw_dim());
        let mut sum = 0.0;
        for k in 0..n {
            let (f, partial) = term.integrand.eval(&jets.jet(k));
            sum += f;
            adj[[0, k]] = term.scale * partial.value;
            if order >= JetOrder::Gradient {
                for (i, v) in partial.grad().iter().enumerate() {
                    adj[[1 + i, k]] = term.scale * v;
                }
            }
            if order >= JetOrder::Hessian {
                let off = 1 + partial.dim;
                for (p, v) in partial.hess().iter().enumerate() {
                    adj[[off + p, k]] = term.scale * v;
                }
            }
        }
        interior_value = term.scale * sum;
        grad.add_assign(&backward(net, &tape, adj));
    }
    let mut mismatch_value = 0.0;
    let mut weight = 0.0;
    if let Some((term, w)) = mismatch {
        check_points(net, term.points)?;
        if term.targets.len() != term.points.nrows() {
            return Err(Error::Dimension {
                expected: term.points.nrows(),
                got: term.targets.len(),
            });
        }
        weight = w;
        let (jets, tape) = forward(net, term.points, JetOrder::Value, true);
        let tape = tape.expect("recorded");
        let mut adj = Array2::zeros(jets.channels.raw_dim());
        let mut sum = 0.0;
        for (k, (&u, &g)) in jets.values().iter().zip(term.targets).enumerate() {
            let r = u - g;
            sum += r * r;
            adj[[0, k]] = w * term.scale * 2.0 * r;
        }
        mismatch_value = term.scale * sum;
        grad.add_assign(&backward(net, &tape, adj));
    }
    let total = interior_value + weight * mismatch_value;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            iteration: None,
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: None,
        });
    }
    Ok(LossGradient {
        interior: interior_value,
        mismatch: mismatch_value,
        total,
        grad,
    })
}

/// Signs of every hidden pre-activation value for a batch, used to detect
/// when a parameter perturbation moves a point across an activation fold.
pub fn fold_pattern(net: &Mlp, points: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
    check_points(net, points)?;
    let n = points.nrows();
    let layers = net.layers();
    let mut x = points.to_owned();
    let mut signs = Vec::new();
    for layer in &layers[..layers.len() - 1] {
        let pre = affine(&x, layer, n);
        signs.extend(pre.iter().map(|&v| v > 0.0));
        x = pre.mapv(|v| net.activation().value(v));
    }
    Ok(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{forward_jet, ActivationKind};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct SquaredSum;

    impl Integrand for SquaredSum {
        fn order(&self) -> JetOrder {
            JetOrder::Hessian
        }
        fn eval(&self, jet: &Jet) -> (f64, Jet) {
            let mut p = Jet::zero(jet.dim);
            let mut f = 0.5 * jet.value * jet.value;
            p.value = jet.value;
            for i in 0..jet.dim {
                f += 0.5 * jet.grad[i].powi(2);
                p.grad[i] = jet.grad[i];
            }
            for k in 0..hess_pairs(jet.dim).len() {
                f += 0.5 * jet.hess[k].powi(2);
                p.hess[k] = jet.hess[k];
            }
            (f, p)
        }
    }

    fn random_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, dim), || rng.random::<f64>())
    }

    #[test]
    fn batch_matches_pointwise_jets() {
        for dim in [1, 2] {
            let net = Mlp::init(dim, &[7, 5, 6], ActivationKind::Tanh, 2).unwrap();
            let pts = random_points(9, dim, 1);
            let jets = forward_batch(&net, pts.view(), JetOrder::Hessian).unwrap();
            for k in 0..pts.nrows() {
                let single = forward_jet(&net, pts.row(k).as_slice().unwrap()).unwrap();
                let batched = jets.jet(k);
                for (a, b) in single.channels(JetOrder::Hessian).iter().zip(batched.channels(JetOrder::Hessian)) {
                    assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn lower_orders_share_value_channel() {
        let net = Mlp::init(2, &[8, 8], ActivationKind::sm_relu(0.1), 3).unwrap();
        let pts = random_points(5, 2, 2);
        let v0 = forward_batch(&net, pts.view(), JetOrder::Value).unwrap();
        let v2 = forward_batch(&net, pts.view(), JetOrder::Hessian).unwrap();
        assert_eq!(v0.values(), v2.values());
    }

    #[test]
    fn empty_batch_rejected() {
        let net = Mlp::init(1, &[4], ActivationKind::Tanh, 0).unwrap();
        let pts = Array2::<f64>::zeros((0, 1));
        assert!(forward_batch(&net, pts.view(), JetOrder::Value).is_err());
        let term = InteriorTerm {
            points: pts.view(),
            scale: 1.0,
            integrand: &SquaredSum,
        };
        assert!(loss_param_gradient(&net, Some(&term), None).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [ActivationKind::Tanh, ActivationKind::sm_relu(0.2), ActivationKind::Sigmoid] {
            for dim in [1, 2] {
                let mut net = Mlp::init(dim, &[5, 4], act, 7).unwrap();
                let pts = random_points(6, dim, 3);
                let bpts = random_points(3, dim, 4);
                let targets = [0.1, -0.2, 0.3];
                let term = InteriorTerm {
                    points: pts.view(),
                    scale: 0.5,
                    integrand: &SquaredSum,
                };
                let mm = MismatchTerm {
                    points: bpts.view(),
                    targets: &targets,
                    scale: 1.0 / 3.0,
                };
                let lg = loss_param_gradient(&net, Some(&term), Some((&mm, 7.0))).unwrap();
                let analytic = lg.grad.flatten();
                let theta = net.flat_params();
                let h = 1e-6;
                for i in 0..theta.len() {
                    let mut p = theta.clone();
                    p[i] += h;
                    net.set_flat_params(&p).unwrap();
                    let up = loss_param_gradient(&net, Some(&term), Some((&mm, 7.0))).unwrap().total;
                    p[i] -= 2.0 * h;
                    net.set_flat_params(&p).unwrap();
                    let dn = loss_param_gradient(&net, Some(&term), Some((&mm, 7.0))).unwrap().total;
                    net.set_flat_params(&theta).unwrap();
                    let fd = (up - dn) / (2.0 * h);
                    assert!(
                        (fd - analytic[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "{act:?} dim {dim} param {i}: fd {fd} analytic {}",
                        analytic[i]
                    );
                }
            }
        }
    }

    #[test]
    fn fold_pattern_detects_sign_changes() {
        let net = Mlp::init(1, &[3, 3], ActivationKind::Relu, 1).unwrap();
        let pts = random_points(4, 1, 0);
        let a = fold_pattern(&net, pts.view()).unwrap();
        assert_eq!(a.len(), 4 * 6);
        assert_eq!(a, fold_pattern(&net, pts.view()).unwrap());
    }
}
