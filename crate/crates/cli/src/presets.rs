//! Named experiment families. Desk scale divides iteration budgets by 5 and
//! hidden widths by 2; full scale uses the published budgets.

use std::f64::consts::PI;

use ritz_core::autodiff::ActivationKind;
use ritz_core::energy::{EnergyModel, RegDirection};
use ritz_core::optimize::{EvalSettings, InitialProfile, OptimizerKind, PretrainConfig, TrainConfig};
use ritz_core::sampling::{BoundaryKind, SamplingPlan};

use crate::config::{ExperimentConfig, NetConfig, OutputConfig};

pub const TAU: f64 = 500.0;
pub const GAMMAS: [f64; 3] = [0.25, 0.5, 0.75];

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    build: fn(&Scale) -> Vec<(String, ExperimentConfig)>,
}

impl Preset {
    /// All runs of the preset. `gamma` replaces the boundary-data sweep
    /// with a single value.
    pub fn configs(&self, full: bool, gamma: Option<f64>) -> Vec<(String, ExperimentConfig)> {
        (self.build)(&Scale { full, gamma })
    }
}

pub struct Scale {
    pub full: bool,
    pub gamma: Option<f64>,
}

impl Scale {
    pub fn iterations(&self, published: u64) -> u64 {
        if self.full {
            published
        } else {
            published / 5
        }
    }

    pub fn width(&self, published: usize) -> usize {
        if self.full {
            published
        } else {
            (published / 2).max(1)
        }
    }

    pub fn widths(&self, depth: usize, published: usize) -> Vec<usize> {
        vec![self.width(published); depth]
    }

    fn gammas(&self, sweep: &[f64]) -> Vec<f64> {
        match self.gamma {
            Some(g) => vec![g],
            None => sweep.to_vec(),
        }
    }

    fn plan_1d(&self) -> SamplingPlan {
        SamplingPlan::uniform(if self.full { 10_000 } else { 256 }, 2)
    }

    fn plan_2d(&self) -> SamplingPlan {
        if self.full {
            SamplingPlan::uniform(10_000, 2048)
        } else {
            SamplingPlan::uniform(512, 128)
        }
    }
}

/// Config with the shared defaults: Adam, τ = 500, ten quadrature
/// evaluations per run.
pub fn experiment(
    model: EnergyModel,
    layer_widths: Vec<usize>,
    activation: ActivationKind,
    iterations: u64,
    lr: f64,
    plan: SamplingPlan,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        model,
        net: NetConfig {
            layer_widths,
            activation,
        },
        train: TrainConfig {
            iterations,
            lr,
            tau: TAU,
            optimizer: OptimizerKind::default(),
            plan,
            pretrain: None,
            log_every: (iterations / 100).max(1),
            quad_every: (iterations / 10).max(1),
            seed,
            eval: EvalSettings::default(),
        },
        outputs: OutputConfig::default(),
    }
}

fn smrelu() -> ActivationKind {
    ActivationKind::sm_relu(0.1)
}

fn tag(a: &ActivationKind) -> &'static str {
    a.name()
}

fn g_tag(g: f64) -> String {
    format!("g{:03}", (g * 100.0).round() as i64)
}

fn fig3(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let acts = [
        ActivationKind::Relu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::leaky_relu(),
        smrelu(),
    ];
    let gamma = s.gamma.unwrap_or(0.5);
    acts.iter()
        .map(|a| {
            let model = EnergyModel::OneD { gamma };
            let c = experiment(model, s.widths(3, 128), *a, s.iterations(100_000), 1e-2, s.plan_1d(), 1);
            (format!("{}-{}", tag(a), g_tag(gamma)), c)
        })
        .collect()
}

fn fig3_relu(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let gamma = s.gamma.unwrap_or(0.5);
    let c = experiment(
        EnergyModel::OneD { gamma },
        s.widths(3, 128),
        ActivationKind::Relu,
        s.iterations(100_000),
        1e-2,
        s.plan_1d(),
        1,
    );
    vec![(format!("relu-{}", g_tag(gamma)), c)]
}

fn fig4_lr(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let mut runs = Vec::new();
    for g in s.gammas(&GAMMAS) {
        for lr in [1e-1, 1e-2, 1e-3] {
            let c = experiment(
                EnergyModel::OneD { gamma: g },
                s.widths(3, 128),
                ActivationKind::Relu,
                s.iterations(100_000),
                lr,
                s.plan_1d(),
                1,
            );
            runs.push((format!("{}-lr{:.0e}", g_tag(g), lr), c));
        }
    }
    runs
}

fn fig5_size(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let mut runs = Vec::new();
    for g in s.gammas(&GAMMAS) {
        for depth in [1, 3, 5] {
            for width in [32, 128] {
                let c = experiment(
                    EnergyModel::OneD { gamma: g },
                    s.widths(depth, width),
                    ActivationKind::Relu,
                    s.iterations(100_000),
                    1e-2,
                    s.plan_1d(),
                    1,
                );
                runs.push((format!("{}-{}x{}", g_tag(g), depth, s.width(width)), c));
            }
        }
    }
    runs
}

fn fig5_init(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let mut runs = Vec::new();
    for g in s.gammas(&GAMMAS) {
        for act in [ActivationKind::Relu, smrelu()] {
            for sine in [false, true] {
                let mut c = experiment(
                    EnergyModel::OneDReg { gamma: g, eps: 0.1 / 4.0 },
                    s.widths(3, 128),
                    act,
                    s.iterations(100_000),
                    1e-2,
                    s.plan_1d(),
                    1,
                );
                if sine {
                    c.train.pretrain = Some(PretrainConfig {
                        target: InitialProfile::sine_ramp(g),
                        iterations: s.iterations(5_000),
                        lr: 1e-3,
                        batch: 256,
                    });
                }
                let init = if sine { "sine" } else { "random" };
                runs.push((format!("{}-{}-{init}", g_tag(g), tag(&act)), c));
            }
        }
    }
    runs
}

fn fig6_mixed(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let mut runs = Vec::new();
    for g in s.gammas(&GAMMAS) {
        for act in [ActivationKind::Relu, smrelu()] {
            let model = EnergyModel::TwoD {
                gamma: g,
                length: 1.0,
                bc: BoundaryKind::Mixed,
            };
            let c = experiment(model, s.widths(3, 128), act, s.iterations(200_000), 1e-3, s.plan_2d(), 1);
            runs.push((format!("{}-{}", g_tag(g), tag(&act)), c));
        }
    }
    runs
}

fn dirichlet(g: f64) -> EnergyModel {
    EnergyModel::TwoD {
        gamma: g,
        length: 1.0,
        bc: BoundaryKind::Dirichlet,
    }
}

fn fig7_depth(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    (1..=15)
        .step_by(2)
        .map(|depth| {
            let c = experiment(dirichlet(g), s.widths(depth, 128), smrelu(), s.iterations(300_000), 1e-3, s.plan_2d(), 1);
            (format!("{}-{}x{}", g_tag(g), depth, s.width(128)), c)
        })
        .collect()
}

fn fig8_width(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    [16, 32, 64, 256]
        .into_iter()
        .map(|w| {
            let c = experiment(dirichlet(g), s.widths(5, w), smrelu(), s.iterations(300_000), 1e-3, s.plan_2d(), 1);
            (format!("{}-5x{}", g_tag(g), s.width(w)), c)
        })
        .collect()
}

fn reg(g: f64, eps: f64) -> EnergyModel {
    EnergyModel::TwoDReg { gamma: g, eps, length: 2.0 }
}

fn reg_eps(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let mut runs = Vec::new();
    for g in s.gammas(&GAMMAS) {
        let budget = if g == 0.75 { 200_000 } else { 300_000 };
        for depth in [3, 5, 7] {
            for k in [4, 8, 16, 32] {
                let c = experiment(
                    reg(g, 0.1 / k as f64),
                    s.widths(depth, 128),
                    smrelu(),
                    s.iterations(budget),
                    1e-3,
                    s.plan_2d(),
                    1,
                );
                runs.push((format!("{}-{}x{}-eps{k}", g_tag(g), depth, s.width(128)), c));
            }
        }
    }
    runs
}

fn reg_depth(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    (1..=19)
        .step_by(2)
        .map(|depth| {
            let c = experiment(
                reg(g, 0.1 / 16.0),
                s.widths(depth, 128),
                smrelu(),
                s.iterations(300_000),
                1e-3,
                s.plan_2d(),
                1,
            );
            (format!("{}-{}x{}", g_tag(g), depth, s.width(128)), c)
        })
        .collect()
}

fn reg_width(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    [8, 16, 32, 64, 128, 256, 512]
        .into_iter()
        .map(|w| {
            let c = experiment(
                reg(g, 0.1 / 16.0),
                s.widths(5, w),
                smrelu(),
                s.iterations(300_000),
                1e-3,
                s.plan_2d(),
                1,
            );
            (format!("{}-5x{}", g_tag(g), s.width(w)), c)
        })
        .collect()
}

/// Stratified collocation counts `(N1, N2)` with `N3 = N1`.
pub const ADAPTIVE_COUNTS: [(usize, usize); 6] = [(1500, 7000), (2000, 6000), (3000, 4000), (3500, 3000), (4000, 2000), (4500, 1000)];

fn fig13_adaptive(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    ADAPTIVE_COUNTS
        .into_iter()
        .map(|(n1, n2)| {
            let boundary = if s.full { 1024 } else { 128 };
            let c = experiment(
                reg(g, 0.1 / 16.0),
                s.widths(5, 128),
                smrelu(),
                s.iterations(300_000),
                1e-3,
                SamplingPlan::stratified(n1, n2, n1, boundary),
                1,
            );
            (format!("{}-n1-{n1}-n2-{n2}", g_tag(g)), c)
        })
        .collect()
}

fn fig14_rotated(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    [(4.0, "pi4"), (8.0, "pi8")]
        .into_iter()
        .map(|(div, label)| {
            let model = EnergyModel::Rotated {
                gamma: g,
                phi: PI / div,
                eps: 0.1 / 32.0,
                length: 2.0,
                reg_direction: RegDirection::Normal,
            };
            let c = experiment(model, s.widths(5, 128), smrelu(), s.iterations(300_000), 1e-3, s.plan_2d(), 1);
            (format!("{}-phi-{label}", g_tag(g)), c)
        })
        .collect()
}

fn fig15_activation(s: &Scale) -> Vec<(String, ExperimentConfig)> {
    let g = s.gamma.unwrap_or(0.5);
    [ActivationKind::Tanh, ActivationKind::Relu, smrelu()]
        .into_iter()
        .map(|a| {
            let c = experiment(reg(g, 0.1 / 32.0), s.widths(5, 128), a, s.iterations(300_000), 1e-3, s.plan_2d(), 1);
            (format!("{}-{}", g_tag(g), tag(&a)), c)
        })
        .collect()
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "fig3",
        description: "1D two-well problem, five activation functions",
        build: fig3,
    },
    Preset {
        name: "fig3-relu",
        description: "1D two-well problem, ReLU network",
        build: fig3_relu,
    },
    Preset {
        name: "fig4-lr",
        description: "1D ReLU, learning rates 1e-1, 1e-2, 1e-3",
        build: fig4_lr,
    },
    Preset {
        name: "fig5-size",
        description: "1D ReLU, network depth and width",
        build: fig5_size,
    },
    Preset {
        name: "fig5-init",
        description: "1D regularized, random initialization against a pretrained sine ramp",
        build: fig5_init,
    },
    Preset {
        name: "fig6-mixed",
        description: "2D mixed boundary conditions, ReLU and SmReLU",
        build: fig6_mixed,
    },
    Preset {
        name: "fig7-depth",
        description: "2D Dirichlet laminate, SmReLU, depth sweep",
        build: fig7_depth,
    },
    Preset {
        name: "fig8-width",
        description: "2D Dirichlet laminate, SmReLU, width sweep",
        build: fig8_width,
    },
    Preset {
        name: "reg-eps",
        description: "2D regularized, eps = 0.1/4 .. 0.1/32 on three depths",
        build: reg_eps,
    },
    Preset {
        name: "reg-depth",
        description: "2D regularized, eps = 0.1/16, depth sweep",
        build: reg_depth,
    },
    Preset {
        name: "reg-width",
        description: "2D regularized, eps = 0.1/16, width sweep",
        build: reg_width,
    },
    Preset {
        name: "fig13-adaptive",
        description: "2D regularized, stratified collocation near the top and bottom sides",
        build: fig13_adaptive,
    },
    Preset {
        name: "fig14-rotated",
        description: "rotated wells, phi = pi/4 and pi/8",
        build: fig14_rotated,
    },
    Preset {
        name: "fig15-activation",
        description: "2D regularized, Tanh, ReLU and SmReLU",
        build: fig15_activation,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
