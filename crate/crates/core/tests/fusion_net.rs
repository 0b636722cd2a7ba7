//! Model-level properties: mask invariance, attention normalization, pooling,
//! exact gradients and determinism.

use acuity_core::data::labels::N_HEADS;
use acuity_core::data::mask::{Modality, ModalityMask};
use acuity_core::nn::{masked_attention, FusionModel, Model, ModelConfig, ModelInput, Pooling};
use acuity_core::seed;
use acuity_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn input(cfg: &ModelConfig, mask: ModalityMask, label: &str) -> ModelInput<f64> {
    ModelInput::random(cfg, mask, &mut seed::rng(1, label))
}

fn garbage(x: &ModelInput<f64>, rng: &mut impl Rng) -> ModelInput<f64> {
    let mut y = x.clone();
    for m in &Modality::ALL[1..] {
        if !x.mask.is_present(*m) {
            let slot = y.block_mut(*m).unwrap();
            *slot = match rng.random_range(0..3) {
                0 => None,
                1 => Some(vec![rng.random_range(-1e6..1e6); x.block(*m).map_or(3, |b| b.len())]),
                // wrong length is also never read
                _ => Some(vec![42.0; 1]),
            };
        }
    }
    y
}

#[test]
fn zero_parameters_give_one_half() {
    let m = Model::zeros(ModelConfig::default()).unwrap();
    for mask in ModalityMask::all_valid() {
        let p = m.predict(&input(m.config(), mask, "z")).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
    }
}

#[test]
fn absent_blocks_never_change_outputs() {
    let m = Model::new(ModelConfig::default(), 3).unwrap();
    let mut rng = seed::rng(2, "garbage");
    for (i, mask) in ModalityMask::all_valid().enumerate() {
        for k in 0..5 {
            let x = input(m.config(), mask, &format!("mi{i}:{k}"));
            let a = m.forward(&x).unwrap();
            let b = m.forward(&garbage(&x, &mut rng)).unwrap();
            assert_eq!(a.probs, b.probs);
            assert_eq!(a.logits, b.logits);
        }
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let m = Model::new(ModelConfig::default(), 3).unwrap();
    let x = input(m.config(), ModalityMask::ALL, "det");
    let (a, b) = (m.forward(&x).unwrap(), m.forward(&x).unwrap());
    assert_eq!(a, b);
    let m2 = Model::new(ModelConfig::default(), 3).unwrap();
    assert_eq!(m2.predict(&x).unwrap(), a.probs);
    let mut g1 = vec![0.0; m.n_params()];
    let mut g2 = vec![0.0; m.n_params()];
    m.backward(&a, &[0.3; N_HEADS], &mut g1);
    m.backward(&b, &[0.3; N_HEADS], &mut g2);
    assert_eq!(g1, g2);
}

#[test]
fn attention_rows_are_stochastic_and_masked_columns_zero() {
    let m = Model::new(ModelConfig::default(), 8).unwrap();
    for mask in ModalityMask::all_valid() {
        let t = m.forward(&input(m.config(), mask, "att")).unwrap();
        for b in 0..2 {
            for h in 0..4 {
                let w = t.attention(b, h);
                for i in 0..4 {
                    for j in 0..4 {
                        if !mask.bits()[j] {
                            assert_eq!(w[i][j], 0.0);
                        }
                    }
                    if mask.bits()[i] {
                        assert!((w[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn public_block_matches_present_only_path() {
    let m = Model::new(ModelConfig::default(), 5).unwrap();
    let mask = ModalityMask::new(false, true, true);
    let x = input(m.config(), mask, "blk");
    let t = m.forward(&x).unwrap();
    let y = m.mmsa_block(0, &t.embeddings, mask);
    for (r, &pos) in t.present.iter().enumerate() {
        assert_eq!(y[pos], t.blocks[0].y[r]);
    }
    // per-head weights also agree with the standalone masked attention
    let d = 128;
    let lay = m.layout();
    let slice = |name: &str| &m.params[lay.get(name).unwrap().range()];
    let project = |w: &str, b: &str| -> Vec<Vec<f64>> {
        t.embeddings
            .iter()
            .map(|e| (0..d).map(|o| slice(b)[o] + (0..d).map(|i| slice(w)[o * d + i] * e[i]).sum::<f64>()).collect())
            .collect()
    };
    let (q, k, v) = (project("mmsa0.q.w", "mmsa0.q.b"), project("mmsa0.k.w", "mmsa0.k.b"), project("mmsa0.v.w", "mmsa0.v.b"));
    for h in 0..4 {
        let head = |rows: &Vec<Vec<f64>>| rows.iter().flat_map(|r| r[h * 32..h * 32 + 32].to_vec()).collect::<Vec<_>>();
        let reference = masked_attention(&head(&q), &head(&k), &head(&v), 32, 32, mask);
        let got = t.attention(0, h);
        for &i in &t.present {
            for j in 0..4 {
                assert!((got[i][j] - reference.weights[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ehr_only_mask_equals_straight_line_single_token_model() {
    let m = Model::new(ModelConfig::default(), 6).unwrap();
    let x = input(m.config(), ModalityMask::EHR_ONLY, "ehr-only");
    let t = m.forward(&x).unwrap();
    // single token: attention weight 1, so each block is LN(x + O V x)
    let lay = m.layout();
    let s = |name: &str| &m.params[lay.get(name).unwrap().range()];
    let aff = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
        (0..b.len()).map(|o| b[o] + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>()).collect()
    };
    let mut e = m.encode_modality(&x, Modality::Ehr).unwrap();
    for b in 0..2 {
        let v = aff(s(&format!("mmsa{b}.v.w")), s(&format!("mmsa{b}.v.b")), &e);
        let u = aff(s(&format!("mmsa{b}.o.w")), s(&format!("mmsa{b}.o.b")), &v);
        let r: Vec<f64> = e.iter().zip(&u).map(|(a, b)| a + b).collect();
        let mean = r.iter().sum::<f64>() / 128.0;
        let var = r.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 128.0;
        let (g, bias) = (s(&format!("mmsa{b}.ln.gain")), s(&format!("mmsa{b}.ln.bias")));
        e = (0..128).map(|i| g[i] * (r[i] - mean) / (var + 1e-5).sqrt() + bias[i]).collect();
    }
    let mut h = e;
    for l in 0..3 {
        h = aff(s(&format!("backbone{l}.w")), s(&format!("backbone{l}.b")), &h);
        if l < 2 {
            h.iter_mut().for_each(|a| *a = a.max(0.0));
        }
    }
    let logits = aff(s("heads.w"), s("heads.b"), &h);
    for k in 0..N_HEADS {
        assert!((t.logits[k] - logits[k]).abs() < 1e-12);
        assert!((t.probs[k] - 1.0 / (1.0 + (-logits[k]).exp())).abs() < 1e-12);
    }
}

#[test]
fn masked_mean_pool_examples() {
    let m = Model::new(ModelConfig::default(), 7).unwrap();
    let single = m.forward(&input(m.config(), ModalityMask::EHR_ONLY, "p1")).unwrap();
    assert_eq!(single.pooled, single.tokens()[0]);
    let mask = ModalityMask::new(false, true, true);
    let t = m.forward(&input(m.config(), mask, "p2")).unwrap();
    let rows = t.tokens();
    for i in 0..128 {
        let want = (rows[0][i] + rows[1][i] + rows[2][i]) / 3.0;
        assert!((t.pooled[i] - want).abs() < 1e-14);
    }
    let cfg = ModelConfig {
        pooling: Pooling::EhrToken,
        ..ModelConfig::default()
    };
    let m = Model::new(cfg.clone(), 7).unwrap();
    let t = m.forward(&input(&cfg, ModalityMask::ALL, "p3")).unwrap();
    assert_eq!(t.pooled, t.tokens()[0]);
}

#[test]
fn absent_encoder_parameters_get_exactly_zero_gradient() {
    let m = Model::new(ModelConfig::default(), 9).unwrap();
    let mask = ModalityMask::new(true, false, false);
    let t = m.forward(&input(m.config(), mask, "g0")).unwrap();
    let mut g = vec![0.0; m.n_params()];
    m.backward(&t, &[1.0; N_HEADS], &mut g);
    for spec in &m.layout().tensors {
        let grads = &g[spec.range()];
        if spec.name.starts_with("face.") || spec.name.starts_with("env.") {
            assert!(grads.iter().all(|&x| x == 0.0), "{}", spec.name);
        }
        if spec.name.starts_with("accel.") {
            assert!(grads.iter().any(|&x| x != 0.0), "{}", spec.name);
        }
    }
    let ig = m.input_gradients(&t, &[1.0; N_HEADS]);
    assert!(ig.accel.is_some() && ig.face.is_none() && ig.env.is_none());
}

fn kinks(t: &acuity_core::nn::ForwardTrace<f64>) -> Vec<bool> {
    let mut v: Vec<bool> = t.hidden[1..t.hidden.len() - 1].iter().flatten().map(|&x| x > 0.0).collect();
    for c in t.cnn.iter().flatten() {
        v.extend(c.a1.iter().chain(&c.a2).map(|&x| x > 0.0));
    }
    v
}

#[test]
fn tiny_model_gradients_match_central_differences() {
    let cfg = ModelConfig::tiny();
    let m = Model::new(cfg.clone(), 21).unwrap();
    let mut rng = seed::rng(21, "coords");
    let weights: [f64; N_HEADS] = std::array::from_fn(|i| (i as f64 * 0.37).sin());
    let objective = |model: &Model, x: &ModelInput<f64>| -> (f64, Vec<bool>) {
        let t = model.forward(x).unwrap();
        (t.logits.iter().zip(&weights).map(|(a, b)| a * b).sum(), kinks(&t))
    };
    let mut worst: f64 = 0.0;
    for (k, mask) in ModalityMask::all_valid().enumerate() {
        let x = input(&cfg, mask, &format!("gx{k}"));
        let t = m.forward(&x).unwrap();
        let mut g = vec![0.0; m.n_params()];
        m.backward(&t, &weights, &mut g);
        let base = kinks(&t);
        let mut checked = 0;
        while checked < 40 {
            let i = rng.random_range(0..m.n_params());
            let h = 1e-4;
            let (mut up, mut dn) = (m.clone(), m.clone());
            up.params[i] += h;
            dn.params[i] -= h;
            let ((fu, ku), (fd, kd)) = (objective(&up, &x), objective(&dn, &x));
            if ku != base || kd != base {
                continue;
            }
            let num = (fu - fd) / (2.0 * h);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
        // input gradients of the same objective
        let ig = m.input_gradients(&t, &weights);
        let h = 1e-4;
        for j in 0..x.ehr_temporal.len() {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up.ehr_temporal[j] += h;
            dn.ehr_temporal[j] -= h;
            let num = (objective(&m, &up).0 - objective(&m, &dn).0) / (2.0 * h);
            assert!((num - ig.ehr_temporal[j]).abs() < 1e-7 * (1.0 + num.abs()));
        }
        if let Some(face) = &ig.face {
            for j in 0..face.len() {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.face.as_mut().unwrap()[j] += h;
                dn.face.as_mut().unwrap()[j] -= h;
                let num = (objective(&m, &up).0 - objective(&m, &dn).0) / (2.0 * h);
                assert!((num - face[j]).abs() < 1e-7 * (1.0 + num.abs()));
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn invalid_inputs_rejected_before_compute() {
    let m = Model::new(ModelConfig::tiny(), 1).unwrap();
    let mut x = input(m.config(), ModalityMask::ALL, "bad");
    x.face.as_mut().unwrap()[0] = f64::NAN;
    assert!(matches!(m.forward(&x), Err(Error::NonFiniteInput("face"))));
    let mut x = input(m.config(), ModalityMask::ALL, "bad2");
    x.env = Some(vec![0.0; 5]);
    assert!(matches!(m.forward(&x), Err(Error::Shape { .. })));
    let mut x = input(m.config(), ModalityMask::ALL, "bad3");
    x.accel = None;
    assert!(matches!(m.forward(&x), Err(Error::AbsentModality("accel"))));
}

#[test]
fn single_precision_model_tracks_double() {
    let m = Model::new(ModelConfig::default(), 2).unwrap();
    let m32 = m.cast::<f32>();
    let x = input(m.config(), ModalityMask::ALL, "f32");
    let x32 = ModelInput::<f32> {
        ehr_temporal: x.ehr_temporal.iter().map(|&v| v as f32).collect(),
        ehr_static: x.ehr_static.iter().map(|&v| v as f32).collect(),
        accel: x.accel.as_ref().map(|b| b.iter().map(|&v| v as f32).collect()),
        face: x.face.as_ref().map(|b| b.iter().map(|&v| v as f32).collect()),
        env: x.env.as_ref().map(|b| b.iter().map(|&v| v as f32).collect()),
        mask: x.mask,
    };
    let (a, b) = (m.predict(&x).unwrap(), m32.predict(&x32).unwrap());
    for k in 0..N_HEADS {
        assert!((a[k] - b[k] as f64).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_in_open_unit_interval(seed_v in 0u64..1000, bits in 0u8..8) {
        let m: FusionModel<f64> = FusionModel::new(ModelConfig::tiny(), seed_v).unwrap();
        let x = ModelInput::random(m.config(), ModalityMask::from_optional_bits(bits), &mut seed::rng(seed_v, "pp"));
        let p = m.predict(&x).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
