//! Dense two-dimensional tensors with define-by-run reverse-mode
//! differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters are pulled
//! from a [`ParameterStore`] with [`Graph::param`]; calling
//! [`Graph::backward`] on a scalar node sweeps the recorded operations once in
//! reverse order.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{compare_gradients, grad_check, GradCheckConfig, GradCheckReport, REL_FLOOR};
pub use graph::{backward, log_softmax_rows, Adjoints, Graph, Var};
pub(crate) use graph::softmax_in_place;
pub use params::{Gradients, Parameter, ParameterStore, Partition};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::detached();
        let x = g.constant(Tensor::row(vec![0.0; 3]));
        let y = g.softmax(x).unwrap();
        for &p in g.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_matmul_and_zero_activations() {
        let mut g = Graph::detached();
        let eye = g.constant(Tensor::identity(2));
        let a = g.constant(Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0]]).unwrap());
        let out = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(out), g.value(a));

        let zero = g.constant(Tensor::scalar(0.0));
        let t = g.tanh(zero);
        let s = g.sigmoid(zero);
        assert_eq!(g.value(t).item(), 0.0);
        assert_eq!(g.value(s).item(), 0.5);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.constant(Tensor::zeros(3, 2));
        assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
        let empty = g.constant(Tensor::zeros(1, 0));
        assert!(g.softmax(empty).is_err());
    }

    #[test]
    fn sum_gradient_is_ones_and_dot_gradient_is_twice_input() {
        let mut g = Graph::detached();
        let x = g.variable(Tensor::row(vec![0.5, -1.0, 3.0]));
        let s = g.sum(x);
        let adj = g.backward(s).unwrap();
        assert_eq!(adj.get(&g, x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::detached();
        let x = g.variable(Tensor::row(vec![0.5, -1.0, 3.0]));
        let xx = g.mul(x, x).unwrap();
        let dot = g.sum(xx);
        let adj = g.backward(dot).unwrap();
        assert_eq!(adj.get(&g, x).unwrap().data(), &[1.0, -2.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::detached();
        let x = g.variable(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(crate::Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_parameters_get_zero_gradients() {
        let mut store = ParameterStore::new();
        store.insert("a", Partition::Theta, Tensor::row(vec![1.0, 2.0])).unwrap();
        store.insert("b", Partition::Gamma, Tensor::row(vec![3.0])).unwrap();
        let mut g = Graph::new(&store);
        let a = g.param("a").unwrap();
        let l = g.sum(a);
        let grads = backward(&g, l, &store).unwrap();
        assert_eq!(grads.len(), 2);
        assert_eq!(grads.get("b").unwrap().data(), &[0.0]);
        assert_eq!(grads.get("a").unwrap().data(), &[1.0, 1.0]);
    }

    /// Central differences of a scalar function of one leaf, coordinate by coordinate.
    fn finite_difference(x: &Tensor, f: &dyn Fn(&mut Graph<'static>, Var) -> Var) -> Tensor {
        let eps = 1e-5;
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for i in 0..x.numel() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += delta;
                let mut g = Graph::detached();
                let v = g.variable(xp);
                let l = f(&mut g, v);
                g.value(l).item()
            };
            out.data_mut()[i] = (eval(eps) - eval(-eps)) / (2.0 * eps);
        }
        out
    }

    fn analytic(x: &Tensor, f: &dyn Fn(&mut Graph<'static>, Var) -> Var) -> Tensor {
        let mut g = Graph::detached();
        let v = g.variable(x.clone());
        let l = f(&mut g, v);
        g.backward(l).unwrap().get_or_zero(&g, v)
    }

    fn max_rel(a: &Tensor, n: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(n.data())
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn three_op_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random(&mut rng, 4, 3);
        let x = random(&mut rng, 2, 4);
        let f = move |g: &mut Graph<'static>, v: Var| {
            let wv = g.constant(w.clone());
            let h = g.matmul(v, wv).unwrap();
            let t = g.tanh(h);
            g.sum(t)
        };
        assert!(max_rel(&analytic(&x, &f), &finite_difference(&x, &f)) < 1e-6);
    }

    /// One probe per op kind; each reduces to a scalar through a fixed random
    /// projection so every output coordinate contributes.
    fn op_probe(kind: usize, rng: &mut ChaCha8Rng) -> (Tensor, Box<dyn Fn(&mut Graph<'static>, Var) -> Var>) {
        let x = random(rng, 3, 4);
        let other = random(rng, 3, 4);
        let row = random(rng, 1, 4);
        let col = random(rng, 3, 1);
        let right = random(rng, 4, 2);
        let probe_shape = match kind {
            4 => [3, 2],
            5 => [3, 6],
            6 => [5, 4],
            10 => [4, 4],
            12 => [3, 1],
            13 => [6, 4],
            14 => [4, 3],
            15 => [6, 4],
            16 => [1, 4],
            _ => [3, 4],
        };
        let proj = random(rng, probe_shape[0], probe_shape[1]);
        let f = move |g: &mut Graph<'static>, v: Var| -> Var {
            let out = match kind {
                0 => {
                    let o = g.constant(other.clone());
                    g.add(v, o).unwrap()
                }
                1 => {
                    let o = g.constant(row.clone());
                    g.sub(v, o).unwrap()
                }
                2 => {
                    let o = g.constant(other.clone());
                    g.mul(v, o).unwrap()
                }
                3 => {
                    let c = g.constant(col.clone());
                    let m = g.mul(v, c).unwrap();
                    g.mul(m, v).unwrap()
                }
                4 => {
                    let r = g.constant(right.clone());
                    g.matmul(v, r).unwrap()
                }
                5 => {
                    let s = g.slice(v, 1, 1, 2).unwrap();
                    g.concat(&[v, s], 1).unwrap()
                }
                6 => {
                    let s = g.slice(v, 0, 1, 2).unwrap();
                    g.concat(&[v, s], 0).unwrap()
                }
                7 => g.tanh(v),
                8 => g.sigmoid(v),
                9 => g.softmax(v).unwrap(),
                // v as a 3-row embedding table, with a repeated id
                10 => g.embedding(v, &[2, 0, 2, 1]).unwrap(),
                11 => {
                    let s = g.sum(v);
                    let sc = g.scale(v, -1.7);
                    g.mul(sc, s).unwrap()
                }
                12 => g.softmax_nll(v, &[3, 0, 1]).unwrap(),
                13 => g.repeat_rows(v, 2),
                14 => g.reshape(v, 4, 3).unwrap(),
                15 => {
                    let t = g.tanh(v);
                    g.interleave(&[v, t]).unwrap()
                }
                16 => {
                    let w = g.slice(v, 1, 0, 3).unwrap();
                    let w = g.slice(w, 0, 0, 1).unwrap();
                    let w = g.softmax(w).unwrap();
                    g.attend_context(w, v).unwrap()
                }
                _ => unreachable!(),
            };
            let p = g.constant(proj.clone());
            let prod = g.mul(out, p).unwrap();
            g.sum(prod)
        };
        (x, Box::new(f))
    }

    #[test]
    fn every_op_kind_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in 0..=16 {
            let (x, f) = op_probe(kind, &mut rng);
            let err = max_rel(&analytic(&x, &*f), &finite_difference(&x, &*f));
            assert!(err < 1e-6, "op probe {kind}: relative error {err}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn op_gradients_agree_with_finite_differences(seed in any::<u64>(), kind in 0usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, f) = op_probe(kind, &mut rng);
            let err = max_rel(&analytic(&x, &*f), &finite_difference(&x, &*f));
            prop_assert!(err < 1e-6, "op probe {} error {}", kind, err);
        }

        #[test]
        fn softmax_rows_are_distributions(vals in proptest::collection::vec(-30.0f64..30.0, 1..24)) {
            let mut g = Graph::detached();
            let x = g.constant(Tensor::row(vals));
            let y = g.softmax(x).unwrap();
            let s: f64 = g.value(y).data().iter().sum();
            prop_assert!(g.value(y).data().iter().all(|&p| p >= 0.0));
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn backward_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParameterStore::new();
            store.insert("w", Partition::Theta, random(&mut rng, 3, 3)).unwrap();
            let input = random(&mut rng, 2, 3);
            let build = |g: &mut Graph<'_>, ca: f64, cb: f64| {
                let w = g.param("w").unwrap();
                let x = g.constant(input.clone());
                let h = g.matmul(x, w).unwrap();
                let f = g.tanh(h);
                let f = g.sum(f);
                let s = g.softmax(h).unwrap();
                let s = g.mul(s, h).unwrap();
                let gg = g.sum(s);
                let fa = g.scale(f, ca);
                let gb = g.scale(gg, cb);
                g.add(fa, gb).unwrap()
            };
            let grad = |ca, cb| {
                let mut g = Graph::new(&store);
                let l = build(&mut g, ca, cb);
                backward(&g, l, &store).unwrap()
            };
            let (gf, gg, gc) = (grad(1.0, 0.0), grad(0.0, 1.0), grad(a, b));
            let combined: Vec<f64> = gf.get("w").unwrap().data().iter()
                .zip(gg.get("w").unwrap().data())
                .map(|(x, y)| a * x + b * y)
                .collect();
            for (x, y) in combined.iter().zip(gc.get("w").unwrap().data()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_and_backward_are_bitwise_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut store = ParameterStore::new();
            store.insert("w", Partition::Theta, random(&mut rng, 4, 4)).unwrap();
            let x = random(&mut rng, 3, 4);
            let mut g = Graph::new(&store);
            let w = g.param("w").unwrap();
            let xv = g.constant(x);
            let h = g.matmul(xv, w).unwrap();
            let h = g.tanh(h);
            let l = g.softmax_nll(h, &[0, 1, 2]).unwrap();
            let l = g.sum(l);
            let value = g.value(l).item();
            (value.to_bits(), backward(&g, l, &store).unwrap())
        };
        let (a, ga) = run();
        let (b, gb) = run();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn affine_loss_grad_check_is_exact() {
        let mut store = ParameterStore::new();
        store
            .insert("w", Partition::Theta, Tensor::row(vec![0.3, -0.2, 1.1]))
            .unwrap();
        let report = grad_check(
            |g| {
                let w = g.param("w")?;
                let c = g.constant(Tensor::row(vec![2.0, -1.0, 0.5]));
                let p = g.mul(w, c)?;
                Ok(g.sum(p))
            },
            &store,
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-10, "{report:?}");
        assert_eq!(report.coordinates, 3);
    }

    #[test]
    fn compare_gradients_flags_a_perturbed_gradient() {
        let mut store = ParameterStore::new();
        store
            .insert("w", Partition::Theta, Tensor::row(vec![0.7, -0.4]))
            .unwrap();
        // Sum of tanh, scaled so the loss magnitude resembles a token sum.
        let loss = |g: &mut Graph<'_>| {
            let w = g.param("w")?;
            let t = g.tanh(w);
            let s = g.sum(t);
            Ok(g.scale(s, 20.0))
        };
        let grads = |store: &ParameterStore| {
            let mut g = Graph::new(store);
            let l = loss(&mut g).unwrap();
            backward(&g, l, store).unwrap()
        };
        let cfg = GradCheckConfig::default();
        let exact = grads(&store);
        assert!(compare_gradients(&exact, loss, &store, &cfg).unwrap().max_rel_error < 1e-9);

        let mut wrong = exact.clone();
        wrong.get_mut("w").unwrap().data_mut()[1] *= 1.0 + 1e-3;
        let r = compare_gradients(&wrong, loss, &store, &cfg).unwrap();
        assert!(r.max_rel_error > 5e-4 && r.worst_index == 1, "{r:?}");
    }

    #[test]
    fn grad_check_rejects_bad_eps_and_reports_non_finite_loss() {
        let mut store = ParameterStore::new();
        store.insert("w", Partition::Theta, Tensor::row(vec![1.0])).unwrap();
        let cfg = GradCheckConfig {
            eps: 0.1,
            ..Default::default()
        };
        assert!(grad_check(|g| g.param("w"), &store, &cfg).is_err());

        // Diverges as soon as w moves off 1.0.
        let err = grad_check(
            |g| {
                let w = g.param("w")?;
                let v = g.value(w).item();
                let c = if v == 1.0 { 1.0 } else { f64::NAN };
                Ok(g.scale(w, c))
            },
            &store,
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, crate::Error::NonFiniteLoss { ref param } if param == "w"));
    }
}
