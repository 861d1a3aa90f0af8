use super::*;

const SQUARE: [(f64, f64); 2] = [(-1.0, 1.0), (-1.0, 1.0)];

/// Literal `c + sum_i v_i act(sum_j w_ij x_j + d_i)`.
fn shallow_direct(p: &MlpParams, x: &[f64]) -> f64 {
    let (w, v) = (&p.weights[0], p.weights[1].data());
    let n = x.len();
    let d = p.biases[0].as_ref().unwrap().data();
    let mut s = p.biases[1].as_ref().unwrap().data()[0];
    for i in 0..v.len() {
        let mut z = d[i];
        for j in 0..n {
            z += w.data()[i * n + j] * x[j];
        }
        s += v[i] * p.activation.apply(z);
    }
    s
}

fn deviation(p: &MlpParams, kan: &ExplicitKan, pts: &[Vec<f64>]) -> f64 {
    pts.iter()
        .map(|x| (shallow_direct(p, x) - kan.eval(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn batched_mlp_matches_direct_formula() {
    let p = random_shallow_mlp(3, 7, Activation::Tanh, 4);
    let pts = sample_box(&[(-1.0, 1.0); 3], 50).unwrap();
    let batched = mlp_eval(&p, &pts).unwrap();
    for (x, y) in pts.iter().zip(batched) {
        assert!((shallow_direct(&p, x) - y).abs() < 1e-12);
    }
}

#[test]
fn identity_activation_converts_exactly() {
    for seed in 0..3 {
        let p = random_shallow_mlp(2, 5, Activation::Identity, seed);
        let pts = sample_box(&SQUARE, 1000).unwrap();
        for order in 1..=3 {
            for m in [order + 2, 10] {
                let c = mlp_to_kan(&p, m, order, &SQUARE, None).unwrap();
                let e = deviation(&p, &c.kan, &pts);
                assert!(e < 1e-12, "seed {seed} order {order} m {m}: {e}");
            }
        }
    }
}

#[test]
fn tanh_mlp_to_kan_within_tolerance() {
    let p = random_shallow_mlp(2, 5, Activation::Tanh, 0);
    let pts = sample_box(&SQUARE, DEFAULT_SAMPLES).unwrap();
    let err = |m| deviation(&p, &mlp_to_kan(&p, m, 3, &SQUARE, None).unwrap().kan, &pts);
    let e128 = err(128);
    assert!(e128 < 1e-3, "{e128}");
    assert!(err(64) < err(8));
}

#[test]
fn measured_error_respects_bound_chain() {
    for seed in 0..5 {
        let p = random_shallow_mlp(2, 5, Activation::Tanh, seed);
        let pts = sample_box(&SQUARE, 2000).unwrap();
        for m in [6, 8, 16, 32] {
            let c = mlp_to_kan(&p, m, 3, &SQUARE, None).unwrap();
            let e = deviation(&p, &c.kan, &pts);
            assert!(e <= c.bound + 1e-9, "seed {seed} m {m}: {e} > {}", c.bound);
        }
    }
}

#[test]
fn inner_edges_split_the_bias() {
    let p = random_shallow_mlp(3, 2, Activation::Silu, 1);
    let c = mlp_to_kan(&p, 8, 2, &[(0.0, 1.0); 3], None).unwrap();
    let d = p.biases[0].as_ref().unwrap().data();
    match &c.kan.inner[1][2] {
        Univariate::Affine { slope, offset } => {
            assert_eq!(*slope, p.weights[0].data()[5]);
            assert!((offset - d[1] / 3.0).abs() < 1e-15);
        }
        e => panic!("{e:?}"),
    }
    assert!(!c.width_hypothesis);
    assert!(
        mlp_to_kan(
            &random_shallow_mlp(2, 5, Activation::Tanh, 0),
            8,
            3,
            &SQUARE,
            None
        )
        .unwrap()
        .width_hypothesis
    );
}

#[test]
fn corners_do_not_exceed_interior_max() {
    for seed in 0..5 {
        let p = random_shallow_mlp(2, 5, Activation::Tanh, seed);
        let c = mlp_to_kan(&p, 16, 3, &SQUARE, None).unwrap();
        let pts = sample_box(&SQUARE, DEFAULT_SAMPLES).unwrap();
        let (interior, corners) = pts.split_at(DEFAULT_SAMPLES);
        let (di, dc) = (
            deviation(&p, &c.kan, interior),
            deviation(&p, &c.kan, corners),
        );
        assert!(dc <= di, "seed {seed}: corners {dc} vs interior {di}");
    }
}

#[test]
fn shared_fit_interval_must_cover_preactivations() {
    let p = random_shallow_mlp(2, 5, Activation::Tanh, 2);
    let err = mlp_to_kan(&p, 16, 3, &SQUARE, Some((-0.1, 0.1))).unwrap_err();
    assert!(matches!(err, Error::DomainNotCovered { .. }), "{err}");
    let wide = mlp_to_kan(&p, 64, 3, &SQUARE, Some((-4.0, 4.0))).unwrap();
    let pts = sample_box(&SQUARE, 500).unwrap();
    assert!(deviation(&p, &wide.kan, &pts) <= wide.bound + 1e-9);
}

#[test]
fn rejects_deep_or_multi_output_mlps() {
    let mut p = random_shallow_mlp(2, 3, Activation::Tanh, 0);
    p.weights[1] = Tensor::zeros(&[2, 3]);
    assert!(mlp_to_kan(&p, 8, 3, &SQUARE, None).is_err());
    let p = random_shallow_mlp(2, 3, Activation::Tanh, 0);
    assert!(mlp_to_kan(&p, 8, 3, &[(-1.0, 1.0)], None).is_err());
}

fn affine_kan() -> ExplicitKan {
    let inner = vec![
        vec![
            Univariate::Affine {
                slope: 0.5,
                offset: -0.2,
            },
            Univariate::Affine {
                slope: -1.5,
                offset: 0.1,
            },
        ],
        vec![
            Univariate::Affine {
                slope: 2.0,
                offset: 0.0,
            },
            Univariate::Affine {
                slope: 0.25,
                offset: 0.3,
            },
        ],
    ];
    let outer = vec![
        Univariate::Affine {
            slope: 1.2,
            offset: 0.4,
        },
        Univariate::Affine {
            slope: -0.7,
            offset: 0.0,
        },
    ];
    ExplicitKan::new(inner, outer, 0.05).unwrap()
}

#[test]
fn affine_kan_with_identity_units_is_exact() {
    let k = affine_kan();
    let c = kan_to_mlp(&k, 4, Activation::Identity, &SQUARE).unwrap();
    assert!(c.regularized > 0);
    let pts = sample_box(&SQUARE, 1000).unwrap();
    let y = mlp_eval(&c.mlp, &pts).unwrap();
    for (x, y) in pts.iter().zip(y) {
        assert!((k.eval(x) - y).abs() < 1e-10);
    }
}

fn sine_kan() -> ExplicitKan {
    ExplicitKan::new(
        vec![vec![Univariate::func(f64::sin)]],
        vec![Univariate::Affine {
            slope: 1.0,
            offset: 0.0,
        }],
        0.0,
    )
    .unwrap()
}

#[test]
fn sine_edge_by_tanh_units() {
    let pi = std::f64::consts::PI;
    let k = sine_kan();
    let pts = sample_box(&[(-pi, pi)], DEFAULT_SAMPLES).unwrap();
    let exact: Vec<f64> = pts.iter().map(|x| k.eval(x)).collect();
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&b| {
            let c = kan_to_mlp(&k, b, Activation::Tanh, &[(-pi, pi)]).unwrap();
            sup_deviation(&exact, &mlp_eval(&c.mlp, &pts).unwrap())
        })
        .collect();
    assert!(errs[2] < 1e-2, "{errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn assembled_mlp_equals_composed_unit_sums() {
    let k = ExplicitKan::new(
        vec![
            vec![Univariate::func(f64::sin), Univariate::func(|x| x * x)],
            vec![
                Univariate::func(f64::cos),
                Univariate::Affine {
                    slope: -1.0,
                    offset: 0.5,
                },
            ],
            vec![Univariate::func(|x| x.exp()), Univariate::func(f64::tanh)],
        ],
        vec![
            Univariate::func(f64::tanh),
            Univariate::func(|u| u * u),
            Univariate::Affine {
                slope: 0.3,
                offset: 0.0,
            },
        ],
        -0.4,
    )
    .unwrap();
    let c = kan_to_mlp(&k, 6, Activation::Silu, &SQUARE).unwrap();
    assert_eq!(c.mlp.weights[0].shape(), &[3 * 2 * 6, 2]);
    assert_eq!(c.mlp.weights[1].shape(), &[3 * 6, 36]);
    let pts = sample_box(&SQUARE, 200).unwrap();
    let y = mlp_eval(&c.mlp, &pts).unwrap();
    for (x, y) in pts.iter().zip(y) {
        let mut s = k.bias;
        for i in 0..3 {
            let u: f64 = (0..2).map(|j| c.inner_fits[i][j].eval(x[j])).sum();
            s += c.outer_fits[i].eval(u);
        }
        assert!((s - y).abs() < 1e-12, "{s} vs {y}");
    }
    assert!(kan_to_mlp(&k, 1, Activation::Tanh, &SQUARE).is_err());
}

#[test]
fn identity_family_study_passes() {
    let params = random_shallow_mlp(2, 5, Activation::Identity, 3);
    let r = convergence_study(
        &Target::Mlp { params, order: 3 },
        &[5, 8, 16],
        &SQUARE,
        1e-10,
        2000,
    )
    .unwrap();
    assert!(
        r.sup_error.iter().all(|&e| (0.0..1e-12).contains(&e)),
        "{:?}",
        r.sup_error
    );
    assert!(r.pass(), "{}", r.verdict());
    let r = convergence_study(
        &Target::Kan {
            kan: affine_kan(),
            act: Activation::Identity,
        },
        &[2, 4],
        &SQUARE,
        1e-10,
        500,
    )
    .unwrap();
    assert!(r.sup_error.iter().all(|&e| e < 1e-10));
    assert!(r.pass(), "{}", r.verdict());
}

#[test]
fn tanh_study_is_monotone_and_passes() {
    let params = random_shallow_mlp(2, 5, Activation::Tanh, 0);
    let sweep = [8, 16, 32, 64, 128, 256];
    let r = convergence_study(
        &Target::Mlp { params, order: 3 },
        &sweep,
        &SQUARE,
        1e-3,
        DEFAULT_SAMPLES,
    )
    .unwrap();
    assert!(r.monotone(), "{:?}", r.sup_error);
    assert!(r.pass(), "{}", r.verdict());
    assert!(r
        .sup_error
        .iter()
        .zip(&r.bound)
        .all(|(e, b)| *e <= b.unwrap() + 1e-9));
    assert_eq!(r.to_csv().lines().count(), 1 + sweep.len());
    assert!(r.verdict().contains("PASS"));
}

#[test]
fn unreachable_eps_reports_failure() {
    let params = random_shallow_mlp(2, 5, Activation::Tanh, 0);
    let r = convergence_study(
        &Target::Mlp { params, order: 3 },
        &[8, 16],
        &SQUARE,
        0.0,
        100,
    )
    .unwrap();
    assert!(!r.pass());
    assert!(r.verdict().contains("FAIL"));
    let rising = EquivReport {
        sup_error: vec![1e-3, 2e-3],
        ..r.clone()
    };
    assert!(!rising.monotone());
    let noise = EquivReport {
        sup_error: vec![1e-16, 4e-16],
        ..r
    };
    assert!(noise.monotone());
    let t = Target::Kan {
        kan: sine_kan(),
        act: Activation::Tanh,
    };
    assert!(convergence_study(&t, &[], &[(-1.0, 1.0)], 1.0, 10).is_err());
    assert!(convergence_study(&t, &[8, 8], &[(-1.0, 1.0)], 1.0, 10).is_err());
}

#[test]
fn direction_names_round_trip() {
    for d in [Direction::MlpToKan, Direction::KanToMlp] {
        assert_eq!(d.to_string().parse::<Direction>().unwrap(), d);
    }
    assert_eq!(
        "kan-to-mlp".parse::<Direction>().unwrap(),
        Direction::KanToMlp
    );
}
