//! Central finite-difference checks of reverse-mode gradients.

use std::sync::Arc;

use crate::error::Result;
use crate::rng::SplitRng;
use crate::tape::{Tape, UnaryOp, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    pub rtol: f64,
    /// Coordinates probed per parameter tensor; smaller tensors are checked fully.
    pub max_coords: usize,
    /// Denominator floor: relative error is `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            rtol: 1e-6,
            max_coords: 64,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error per parameter tensor.
    pub max_rel_err: Vec<f64>,
    pub coords_checked: usize,
    pub rtol: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().cloned().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.rtol
    }
}

/// Compares `analytic` gradients against central differences of `eval`.
pub fn compare_gradients<E>(
    eval: E,
    params: &[Tensor],
    analytic: &[Vec<f64>],
    cfg: &GradCheckConfig,
    rng: &mut SplitRng,
) -> Result<GradCheckReport>
where
    E: Fn(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel_err = Vec::with_capacity(params.len());
    let mut coords_checked = 0;
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = if p.len() <= cfg.max_coords {
            (0..p.len()).collect()
        } else {
            (0..cfg.max_coords).map(|_| rng.below(p.len())).collect()
        };
        let mut worst: f64 = 0.0;
        for c in coords {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + cfg.h;
            let fp = eval(&work)?;
            work[pi].data_mut()[c] = orig - cfg.h;
            let fm = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (fp - fm) / (2.0 * cfg.h);
            let a = analytic[pi][c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            worst = worst.max(rel);
            coords_checked += 1;
        }
        max_rel_err.push(worst);
    }
    Ok(GradCheckReport {
        max_rel_err,
        coords_checked,
        rtol: cfg.rtol,
    })
}

/// Checks tape gradients of the scalar built by `f` from leaves holding `params`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor],
    cfg: &GradCheckConfig,
    rng: &mut SplitRng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| tape.grad_tensor(*v).into_data()).collect();
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.leaf(p.clone(), true)).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).item())
    };
    compare_gradients(eval, params, &analytic, cfg, rng)
}

/// Outcome of the per-operation oracle sweep.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub name: &'static str,
    pub trials: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

fn uniform_tensor(rng: &mut SplitRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::matrix(rows, cols, data).expect("dims")
}

/// Weighted sum `Σ w ⊙ x` with a fixed random `w`, so upstream gradients are not uniform.
fn probe(tape: &mut Tape, x: Var, w: &Tensor) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(x, wv)?;
    Ok(tape.sum(p))
}

type Builder = fn(&mut Tape, &[Var], &Tensor, &OpFixture) -> Result<Var>;

/// Non-differentiable inputs some ops need.
struct OpFixture {
    noise: Tensor,
    indices: Arc<Vec<u32>>,
    targets: Arc<Vec<u8>>,
}

fn unary_case(op: UnaryOp) -> Builder {
    match op {
        UnaryOp::Tanh => |t, v, w, _| {
            let y = t.tanh(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Sigmoid => |t, v, w, _| {
            let y = t.sigmoid(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Exp => |t, v, w, _| {
            let y = t.exp(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Log => |t, v, w, _| {
            let y = t.log(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Softplus => |t, v, w, _| {
            let y = t.softplus(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Square => |t, v, w, _| {
            let y = t.square(v[0]);
            probe(t, y, w)
        },
        UnaryOp::Negate => |t, v, w, _| {
            let y = t.neg(v[0]);
            probe(t, y, w)
        },
        _ => |t, v, w, _| {
            let y = t.clamp(v[0], -1.0, 1.0);
            probe(t, y, w)
        },
    }
}

/// Runs every differentiable operation through `trials` random finite-difference checks.
pub fn op_oracle_suite(trials: usize, seed: u64, cfg: &GradCheckConfig) -> Result<Vec<OpCheck>> {
    let mut rng = SplitRng::seed_from(seed);
    // (name, builder, input shapes, input kind)
    #[derive(Clone, Copy)]
    enum Kind {
        Any,
        Positive,
        NonZero,
    }
    let cases: Vec<(&'static str, Builder, Vec<(usize, usize, Kind)>, (usize, usize))> = vec![
        (
            "matmul",
            |t, v, w, _| {
                let y = t.matmul(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(3, 4, Kind::Any), (4, 2, Kind::Any)],
            (3, 2),
        ),
        (
            "add_row",
            |t, v, w, _| {
                let y = t.add_row(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(3, 4, Kind::Any), (1, 4, Kind::Any)],
            (3, 4),
        ),
        ("tanh", unary_case(UnaryOp::Tanh), vec![(2, 3, Kind::Any)], (2, 3)),
        ("sigmoid", unary_case(UnaryOp::Sigmoid), vec![(2, 3, Kind::Any)], (2, 3)),
        ("exp", unary_case(UnaryOp::Exp), vec![(2, 3, Kind::Any)], (2, 3)),
        ("log", unary_case(UnaryOp::Log), vec![(2, 3, Kind::Positive)], (2, 3)),
        ("softplus", unary_case(UnaryOp::Softplus), vec![(2, 3, Kind::Any)], (2, 3)),
        ("square", unary_case(UnaryOp::Square), vec![(2, 3, Kind::Any)], (2, 3)),
        ("negate", unary_case(UnaryOp::Negate), vec![(2, 3, Kind::Any)], (2, 3)),
        ("clamp", unary_case(UnaryOp::Clamp(-1.0, 1.0)), vec![(2, 3, Kind::Any)], (2, 3)),
        (
            "add",
            |t, v, w, _| {
                let y = t.add(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(2, 3, Kind::Any), (2, 3, Kind::Any)],
            (2, 3),
        ),
        (
            "sub_scalar",
            |t, v, w, _| {
                let y = t.sub(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(2, 3, Kind::Any), (1, 1, Kind::Any)],
            (2, 3),
        ),
        (
            "mul",
            |t, v, w, _| {
                let y = t.mul(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(2, 3, Kind::Any), (2, 3, Kind::Any)],
            (2, 3),
        ),
        (
            "div",
            |t, v, w, _| {
                let y = t.div(v[0], v[1])?;
                probe(t, y, w)
            },
            vec![(2, 3, Kind::Any), (2, 3, Kind::NonZero)],
            (2, 3),
        ),
        (
            "concat_slice",
            |t, v, w, _| {
                let c = t.concat_cols(&[v[0], v[1]])?;
                let s = t.slice_cols(c, 1, 3)?;
                let s = t.square(s);
                probe(t, s, w)
            },
            vec![(2, 2, Kind::Any), (2, 3, Kind::Any)],
            (2, 3),
        ),
        (
            "concat_slice_rows",
            |t, v, w, _| {
                let c = t.concat_rows(&[v[0], v[1]])?;
                let s = t.slice_rows(c, 1, 3)?;
                let s = t.square(s);
                probe(t, s, w)
            },
            vec![(2, 3, Kind::Any), (3, 3, Kind::Any)],
            (3, 3),
        ),
        (
            "sum_mean",
            |t, v, w, _| {
                let r = t.sum_cols(v[0]);
                let r = t.square(r);
                let p = probe(t, r, w)?;
                let m = t.mean(v[0]);
                let m = t.square(m);
                t.add(p, m)
            },
            vec![(3, 4, Kind::Any)],
            (3, 1),
        ),
        (
            "gaussian_sample",
            |t, v, w, fx| {
                let n = t.constant(fx.noise.clone());
                let y = t.gaussian_sample(v[0], v[1], n)?;
                probe(t, y, w)
            },
            vec![(2, 3, Kind::Any), (2, 3, Kind::Positive)],
            (2, 3),
        ),
        (
            "kl_diag_gaussians",
            |t, v, _, _| t.kl_diag_gaussians(v[0], v[1], v[2], v[3]),
            vec![
                (2, 3, Kind::Any),
                (2, 3, Kind::Positive),
                (2, 3, Kind::Any),
                (2, 3, Kind::Positive),
            ],
            (1, 1),
        ),
        (
            "gather_sum",
            |t, v, w, fx| {
                let y = t.gather_sum(v[0], Arc::clone(&fx.indices), 3)?;
                let y = t.tanh(y);
                probe(t, y, w)
            },
            vec![(6, 2, Kind::Any)],
            (2, 2),
        ),
        (
            "categorical_nll",
            |t, v, _, fx| t.categorical_nll(v[0], Arc::clone(&fx.targets), 3),
            vec![(2, 6, Kind::Any)],
            (1, 1),
        ),
    ];

    let mut out = Vec::with_capacity(cases.len());
    for (name, build, shapes, out_shape) in cases {
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let params: Vec<Tensor> = shapes
                .iter()
                .map(|&(r, c, kind)| match kind {
                    Kind::Any => uniform_tensor(&mut rng, r, c, -2.0, 2.0),
                    Kind::Positive => uniform_tensor(&mut rng, r, c, 0.1, 2.0),
                    Kind::NonZero => {
                        let mut t = uniform_tensor(&mut rng, r, c, 0.5, 2.0);
                        for v in t.data_mut() {
                            if rng.uniform(0.0, 1.0) < 0.5 {
                                *v = -*v;
                            }
                        }
                        t
                    }
                })
                .collect();
            let w = uniform_tensor(&mut rng, out_shape.0, out_shape.1, -2.0, 2.0);
            let fixture = OpFixture {
                noise: uniform_tensor(&mut rng, 2, 3, -2.0, 2.0),
                indices: Arc::new((0..6).map(|_| rng.below(6) as u32).collect()),
                targets: Arc::new((0..4).map(|_| rng.below(3) as u8).collect()),
            };
            let report = finite_diff_check(
                |t, v| build(t, v, &w, &fixture),
                &params,
                cfg,
                &mut rng,
            )?;
            worst = worst.max(report.worst());
        }
        out.push(OpCheck {
            name,
            trials,
            worst_rel_err: worst,
            passed: worst <= cfg.rtol,
        });
    }
    Ok(out)
}
