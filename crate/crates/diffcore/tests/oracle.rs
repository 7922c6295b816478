use curio_diffcore::{
    finite_diff_check, op_oracle_suite, GradCheckConfig, Mlp, Parameters, SplitRng, Tape, Tensor, Var,
};
use proptest::prelude::*;

fn two_layer(tape: &mut Tape, p: &[Var], x: Var) -> curio_diffcore::Result<Var> {
    let h = tape.matmul(x, p[0])?;
    let h = tape.add_row(h, p[1])?;
    let h = tape.tanh(h);
    let y = tape.matmul(h, p[2])?;
    let y = tape.add_row(y, p[3])?;
    let y = tape.tanh(y);
    Ok(tape.sum(y))
}

fn random(rng: &mut SplitRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn two_layer_tanh_network_matches_central_differences() {
    let mut rng = SplitRng::seed_from(3);
    let x = random(&mut rng, &[5, 4]);
    let params = vec![
        random(&mut rng, &[4, 6]),
        random(&mut rng, &[1, 6]),
        random(&mut rng, &[6, 3]),
        random(&mut rng, &[1, 3]),
    ];
    let cfg = GradCheckConfig {
        max_coords: usize::MAX,
        ..GradCheckConfig::default()
    };
    let report = finite_diff_check(
        |t, p| {
            let xv = t.constant(x.clone());
            two_layer(t, p, xv)
        },
        &params,
        &cfg,
        &mut rng,
    )
    .unwrap();
    assert_eq!(report.coords_checked, 24 + 6 + 18 + 3);
    assert!(report.passed(), "worst {}", report.worst());
}

#[test]
fn every_op_passes_over_100_trials() {
    let checks = op_oracle_suite(100, 11, &GradCheckConfig::default()).unwrap();
    for c in &checks {
        assert!(c.trials >= 100);
        assert!(c.passed, "{} worst {}", c.name, c.worst_rel_err);
    }
}

fn grads_of(mlp: &Mlp, x: &Tensor, weights: (f64, f64)) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = bound.forward(&mut tape, xv).unwrap();
    let f = tape.sum(y);
    let sq = tape.square(y);
    let g = tape.mean(sq);
    let fa = tape.scale(f, weights.0);
    let gb = tape.scale(g, weights.1);
    let loss = tape.add(fa, gb).unwrap();
    tape.backward(loss).unwrap();
    let value = tape.value(y).data().to_vec();
    let grads = bound.vars().iter().map(|v| tape.grad_tensor(*v).into_data()).collect();
    (value, grads)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_gives_bitwise_identical_values_and_grads(seed in any::<u64>()) {
        let run = || {
            let mut rng = SplitRng::seed_from(seed);
            let mlp = Mlp::new(&[3, 8, 2], 1.0, &mut rng);
            let x = random(&mut rng, &[4, 3]);
            grads_of(&mlp, &x, (1.0, 1.0))
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn backward_is_linear_in_the_loss(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = SplitRng::seed_from(seed);
        let mlp = Mlp::new(&[3, 5, 2], 1.0, &mut rng);
        let x = random(&mut rng, &[2, 3]);
        let (_, gf) = grads_of(&mlp, &x, (1.0, 0.0));
        let (_, gg) = grads_of(&mlp, &x, (0.0, 1.0));
        let (_, gab) = grads_of(&mlp, &x, (a, b));
        for ((f, g), c) in gf.iter().zip(&gg).zip(&gab) {
            for ((fi, gi), ci) in f.iter().zip(g).zip(c) {
                let expect = a * fi + b * gi;
                prop_assert!((ci - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn reset_tape_reproduces_the_first_run(seed in any::<u64>()) {
        let mut rng = SplitRng::seed_from(seed);
        let mlp = Mlp::new(&[3, 4, 1], 1.0, &mut rng);
        let x = random(&mut rng, &[3, 3]);
        let mut tape = Tape::new();
        let once = |tape: &mut Tape| {
            let bound = mlp.bind(tape, true);
            let xv = tape.constant(x.clone());
            let y = bound.forward(tape, xv).unwrap();
            let l = tape.sum(y);
            tape.backward(l).unwrap();
            let g: Vec<Vec<f64>> = bound.vars().iter().map(|v| tape.grad_tensor(*v).into_data()).collect();
            (tape.value(l).item(), g)
        };
        let first = once(&mut tape);
        tape.reset();
        let second = once(&mut tape);
        prop_assert_eq!(first, second);
        prop_assert_eq!(mlp.num_values(), 3 * 4 + 4 + 4 + 1);
    }
}
