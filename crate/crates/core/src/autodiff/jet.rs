use crate::error::{Error, Result};
use crate::network::Mlp;

/// Index pairs `(i, j)`, `i <= j`, of the packed Hessian entries.
pub fn hess_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        1 => &[(0, 0)],
        2 => &[(0, 0), (0, 1), (1, 1)],
        _ => panic!("unsupported spatial dimension {dim}"),
    }
}

/// Value, gradient and packed symmetric Hessian of a scalar field at a point.
///
/// Packed order is `[xx]` in 1D and `[xx, xy, yy]` in 2D; unused slots are 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub dim: usize,
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl Jet {
    pub fn zero(dim: usize) -> Self {
        Jet {
            dim,
            value: 0.0,
            grad: [0.0; 2],
            hess: [0.0; 3],
        }
    }

    /// The coordinate function `x_i` evaluated at `x`.
    pub fn coordinate(dim: usize, i: usize, x: f64) -> Self {
        let mut jet = Jet::zero(dim);
        jet.value = x;
        jet.grad[i] = 1.0;
        jet
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn hess(&self) -> &[f64] {
        &self.hess[..hess_pairs(self.dim).len()]
    }

    /// Full Hessian entry `∂²F/∂x_i∂x_j`.
    pub fn hess_entry(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let k = hess_pairs(self.dim)
            .iter()
            .position(|&p| p == (a, b))
            .expect("index within dimension");
        self.hess[k]
    }

    /// Channels in stacked order: value, gradient, packed Hessian.
    pub fn channels(&self, order: JetOrder) -> Vec<f64> {
        let mut out = vec![self.value];
        if order >= JetOrder::Gradient {
            out.extend_from_slice(self.grad());
        }
        if order >= JetOrder::Hessian {
            out.extend_from_slice(self.hess());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|v| v.is_finite())
            && self.hess.iter().all(|v| v.is_finite())
    }
}

/// How many derivative orders to carry through a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JetOrder {
    Value = 0,
    Gradient = 1,
    Hessian = 2,
}

impl JetOrder {
    /// Number of stacked channels carried at this order in `dim` dimensions.
    pub fn channels(self, dim: usize) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 1 + dim,
            JetOrder::Hessian => 1 + dim + hess_pairs(dim).len(),
        }
    }
}

/// Exact value, gradient and Hessian of `net` at the point `x`.
///
/// Affine layers act linearly on every channel; an activation maps
/// `(v, g, H) ↦ (σ(v), σ'(v) g, σ'(v) H + σ''(v) g gᵀ)`.
pub fn forward_jet(net: &Mlp, x: &[f64]) -> Result<Jet> {
    let dim = net.input_dim();
    if x.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    let pairs = hess_pairs(dim);
    let act = net.activation();
    let mut current: Vec<Jet> = (0..dim).map(|i| Jet::coordinate(dim, i, x[i])).collect();
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.fan_out());
        for (row, &b) in layer.weights.rows().into_iter().zip(layer.bias.iter()) {
            let mut z = Jet::zero(dim);
            for (&w, a) in row.iter().zip(&current) {
                z.value += w * a.value;
                for i in 0..dim {
                    z.grad[i] += w * a.grad[i];
                }
                for k in 0..pairs.len() {
                    z.hess[k] += w * a.hess[k];
                }
            }
            z.value += b;
            if l < last {
                let [s0, s1, s2, _] = act.derivatives(z.value);
                let mut a = Jet::zero(dim);
                a.value = s0;
                for i in 0..dim {
                    a.grad[i] = s1 * z.grad[i];
                }
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    a.hess[k] = s1 * z.hess[k] + s2 * z.grad[i] * z.grad[j];
                }
                z = a;
            }
            next.push(z);
        }
        current = next;
    }
    Ok(current[0])
}
