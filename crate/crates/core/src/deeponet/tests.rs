use super::*;
use crate::nn::MlpParams;
use crate::tensor::gradcheck::check_gradients;
use crate::tensor::Activation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp(hidden: &[usize]) -> MlpConfig {
    MlpConfig::new(hidden, Activation::Tanh)
}

fn cfg(branch: BranchConfig, trunk: TrunkConfig) -> ModelConfig {
    ModelConfig {
        branch,
        trunk,
        n_c_in: 2,
        n_c_out: 1,
        n_t: 3,
        extents: [4, 5, 1],
        layout: BranchLayout::Channels,
        trunk_out: None,
        branch_out: None,
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn all_kinds() -> Vec<ModelConfig> {
    let kan = KanConfig::new(&[4], 4, 3);
    let mut fno = FnoConfig::new(4, &[2, 2, 1], 1);
    fno.projection_hidden = vec![6];
    fno.coord_features = true;
    vec![
        cfg(
            BranchConfig::Fno(fno.clone()),
            TrunkConfig::Kan(kan.clone()),
        ),
        cfg(BranchConfig::Fno(fno), TrunkConfig::Mlp(mlp(&[5]))),
        cfg(BranchConfig::Kan(kan.clone()), TrunkConfig::Kan(kan)),
        cfg(BranchConfig::Mlp(mlp(&[6])), TrunkConfig::Mlp(mlp(&[5]))),
    ]
}

/// Straight-line MLP evaluation on one feature vector.
fn manual_mlp(p: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = p.weights.len() - 1;
    for (l, w) in p.weights.iter().enumerate() {
        let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
        let mut o = vec![0.0; n_out];
        for i in 0..n_out {
            let mut s = 0.0;
            for j in 0..n_in {
                s += w.data()[i * n_in + j] * h[j];
            }
            if let Some(b) = &p.biases[l] {
                s += b.data()[i];
            }
            o[i] = if l == last {
                p.out_activation.apply(s)
            } else {
                p.activation.apply(s)
            };
        }
        h = o;
    }
    h
}

fn extract_mlps(m: &HybridModel) -> (MlpParams, MlpParams) {
    let (Branch::Mlp(b), Trunk::Mlp(t)) = (&m.branch, &m.trunk) else {
        panic!("expected MLP branch and trunk")
    };
    (b.params(&m.params), t.params(&m.params))
}

#[test]
fn table_rows_construct() {
    for c in all_kinds() {
        let m = build_model(&c, 0).unwrap();
        let y = m
            .predict(&random(&[2, 2, 4, 5, 1], 1), &random(&[2, 3], 2))
            .unwrap();
        assert_eq!(y.shape(), &[2, 1, 3, 4, 5, 1]);
    }
    let m = build_model(&all_kinds()[0], 0).unwrap();
    assert!(matches!(m.branch, Branch::Fno(_)));
    assert!(matches!(m.trunk, Trunk::Kan(_)));
}

#[test]
fn same_seed_same_model() {
    for c in all_kinds() {
        let a = build_model(&c, 42).unwrap();
        let b = build_model(&c, 42).unwrap();
        assert_eq!(a.params(), b.params());
        let v = random(&[1, 2, 4, 5, 1], 3);
        let xi = random(&[1, 3], 4);
        assert_eq!(a.predict(&v, &xi).unwrap(), b.predict(&v, &xi).unwrap());
        assert_ne!(a.params(), build_model(&c, 43).unwrap().params());
    }
}

#[test]
fn trunk_width_guard() {
    let mut c = all_kinds().remove(3);
    c.trunk_out = Some(4);
    assert!(matches!(build_model(&c, 0), Err(Error::InvalidConfig(_))));
    c.trunk_out = Some(3);
    c.branch_out = Some(5);
    assert!(matches!(build_model(&c, 0), Err(Error::InvalidConfig(_))));
}

#[test]
fn merge_identity_and_ramp() {
    let b = random(&[2, 3, 4, 5, 1], 5);
    assert_eq!(merge_hadamard(&b, &Tensor::ones(&[3])).unwrap(), b);
    let t = Tensor::new(&[3], vec![1., 2., 3.]).unwrap();
    let r = merge_hadamard(&Tensor::ones(&[2, 3, 4, 5, 1]), &t).unwrap();
    for c in 0..2 {
        for k in 0..3 {
            for x in 0..4 {
                for y in 0..5 {
                    assert_eq!(r.at(&[c, k, x, y, 0]), (k + 1) as f64);
                }
            }
        }
    }
}

#[test]
fn merge_matches_loop_nest() {
    let b = random(&[2, 3, 4, 5, 2], 6);
    let t = random(&[3], 7);
    let r = merge_hadamard(&b, &t).unwrap();
    let oracle = Tensor::from_fn(b.shape(), |i| b.at(i) * t.data()[i[1]]);
    assert_eq!(r.max_abs_diff(&oracle), 0.0);
    assert!(merge_hadamard(&b, &Tensor::ones(&[4])).is_err());
}

#[test]
fn constant_one_trunk_returns_branch() {
    let mut m = build_model(&all_kinds()[3], 0).unwrap();
    for id in m.params.ids().collect::<Vec<_>>() {
        let name = m.params.name(id).to_string();
        if name.starts_with("trunk/layer1") {
            let s = m.params.get(id).shape().to_vec();
            let fill = if name.ends_with("bias") { 1.0 } else { 0.0 };
            m.params.set(id, Tensor::full(&s, fill));
        }
    }
    let v = random(&[2, 2, 4, 5, 1], 8);
    let xi = random(&[2, 3], 9);
    let y = m.predict(&v, &xi).unwrap();
    let mut tape = Tape::inference();
    let p = m.params.bind(&mut tape);
    let vv = tape.constant(v);
    let b = m.branch_forward(&mut tape, &p, vv).unwrap();
    assert_eq!(&y, tape.value(b));
}

#[test]
fn zero_branch_gives_zero() {
    for c in all_kinds() {
        let mut m = build_model(&c, 1).unwrap();
        for id in m.params.ids().collect::<Vec<_>>() {
            if m.params.name(id).starts_with("branch/") {
                let s = m.params.get(id).shape().to_vec();
                m.params.set(id, Tensor::zeros(&s));
            }
        }
        let y = m
            .predict(&random(&[2, 2, 4, 5, 1], 10), &random(&[2, 3], 11))
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn mlp_branch_matches_straight_line_script() {
    let m = build_model(&all_kinds()[3], 5).unwrap();
    let (bp, tp) = extract_mlps(&m);
    let v = random(&[2, 2, 4, 5, 1], 12);
    let xi = random(&[2, 3], 13);
    let y = m.predict(&v, &xi).unwrap();
    for s in 0..2 {
        let t = manual_mlp(&tp, &xi.data()[s * 3..s * 3 + 3]);
        for x in 0..4 {
            for yy in 0..5 {
                let feats = [v.at(&[s, 0, x, yy, 0]), v.at(&[s, 1, x, yy, 0])];
                let o = manual_mlp(&bp, &feats);
                for tau in 0..3 {
                    let want = o[tau] * t[tau];
                    assert!((y.at(&[s, 0, tau, x, yy, 0]) - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn row_layout_matches_straight_line_script() {
    let mut c = all_kinds().remove(3);
    c.layout = BranchLayout::ChannelsByRow;
    c.n_c_out = 2;
    c.extents = [3, 4, 2];
    let m = build_model(&c, 6).unwrap();
    let (bp, tp) = extract_mlps(&m);
    assert_eq!(bp.n_in(), 2 * 4);
    assert_eq!(bp.n_out(), 6 * 4);
    let v = random(&[2, 2, 3, 4, 2], 14);
    let xi = random(&[2, 3], 15);
    let y = m.predict(&v, &xi).unwrap();
    for s in 0..2 {
        let t = manual_mlp(&tp, &xi.data()[s * 3..s * 3 + 3]);
        for z in 0..2 {
            for x in 0..3 {
                let mut feats = vec![0.0; 8];
                for ch in 0..2 {
                    for yy in 0..4 {
                        feats[ch * 4 + yy] = v.at(&[s, ch, x, yy, z]);
                    }
                }
                let o = manual_mlp(&bp, &feats);
                for co in 0..2 {
                    for tau in 0..3 {
                        for yy in 0..4 {
                            let want = o[(co * 3 + tau) * 4 + yy] * t[tau];
                            assert!((y.at(&[s, co, tau, x, yy, z]) - want).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn batched_equals_per_sample_loop() {
    for c in all_kinds() {
        let m = build_model(&c, 2).unwrap();
        let v = random(&[3, 2, 4, 5, 1], 16);
        let xi = random(&[3, 3], 17);
        let a = m.predict(&v, &xi).unwrap();
        let b = m.predict_per_sample(&v, &xi).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}

#[test]
fn sample_permutation_commutes() {
    for c in all_kinds() {
        let m = build_model(&c, 3).unwrap();
        let v = random(&[3, 2, 4, 5, 1], 18);
        let xi = random(&[3, 3], 19);
        let perm = [2, 0, 1];
        let a = m.predict(&v, &xi).unwrap().select_axis0(&perm);
        let b = m
            .predict(&v.select_axis0(&perm), &xi.select_axis0(&perm))
            .unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}

#[test]
fn dividing_by_trunk_recovers_branch() {
    let m = build_model(&all_kinds()[1], 4).unwrap();
    let v = random(&[2, 2, 4, 5, 1], 20);
    let xi = random(&[2, 3], 21);
    let y = m.predict(&v, &xi).unwrap();
    let mut tape = Tape::inference();
    let p = m.params.bind(&mut tape);
    let (vv, xv) = (tape.constant(v), tape.constant(xi));
    let b = m.branch_forward(&mut tape, &p, vv).unwrap();
    let t = m.trunk_forward(&mut tape, &p, xv).unwrap();
    let t = tape.value(t).reshape(&[2, 1, 3, 1, 1, 1]).unwrap();
    let rec = y.div(&t).unwrap();
    let b = tape.value(b);
    for (r, w) in rec.data().iter().zip(b.data()) {
        assert!((r - w).abs() <= 1e-12 * w.abs().max(1e-300));
    }
}

#[test]
fn shape_contract_and_errors() {
    let m = build_model(&all_kinds()[2], 0).unwrap();
    assert_eq!(m.output_shape(7), vec![7, 1, 3, 4, 5, 1]);
    let e = m.predict(&random(&[2, 2, 4, 4, 1], 1), &random(&[2, 3], 2));
    assert!(matches!(e, Err(Error::ShapeMismatch { .. })));
    let e = m.predict(&random(&[2, 2, 4, 5, 1], 1), &random(&[1, 3], 2));
    assert!(matches!(e, Err(Error::ShapeMismatch { .. })));
}

#[test]
fn full_model_gradients() {
    for (k, c) in all_kinds().into_iter().enumerate() {
        let m = build_model(&c, 7 + k as u64).unwrap();
        let v = random(&[2, 2, 4, 5, 1], 22);
        let xi = random(&[2, 3], 23).map(|x| 0.5 * (x + 1.0));
        let target = random(&[2, 1, 3, 4, 5, 1], 24);
        check_gradients(m.params().values(), 1e-4, |t, p| {
            let p = Bound::from_vars(p.to_vec());
            let (vv, xv, tg) = (
                t.constant(v.clone()),
                t.constant(xi.clone()),
                t.constant(target.clone()),
            );
            let y = m.forward(t, &p, vv, xv)?;
            let d = t.sub(y, tg)?;
            let d = t.mul(d, d)?;
            Ok(t.mean(d))
        })
        .unwrap_or_else(|e| panic!("config {k}: {e}"));
    }
}
