use gradflow::optim::{OptimizerConfig, StepAction, StepSizeController};
use gradflow::{broadcast_shapes, ops, with_precision, Array, Node, Precision};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 0..4)
}

/// A shape and one that broadcasts to it.
fn shape_and_source() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    shape()
        .prop_flat_map(|s| {
            let n = s.len();
            (Just(s), prop::collection::vec(any::<bool>(), n), 0..=n)
        })
        .prop_map(|(s, collapse, drop)| {
            let src: Vec<usize> = s
                .iter()
                .zip(&collapse)
                .map(|(&d, &c)| if c { 1 } else { d })
                .skip(drop)
                .collect();
            (s, src)
        })
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

fn f64_array(shape: Vec<usize>, data: Vec<f64>) -> Array {
    Array::with_precision(shape, data, Precision::F64).unwrap()
}

proptest! {
    #[test]
    fn broadcast_is_commutative(a in shape(), b in shape()) {
        prop_assert_eq!(broadcast_shapes(&a, &b).ok(), broadcast_shapes(&b, &a).ok());
    }

    #[test]
    fn reduce_undoes_broadcast_up_to_copies(
        (target, src) in shape_and_source(),
        seed in values(64),
    ) {
        let len: usize = src.iter().product();
        let x = f64_array(src.clone(), seed[..len].to_vec());
        let big = x.broadcast_to(&target).unwrap();
        let copies = (big.len() / x.len()) as f64;
        let back = big.reduce_to_shape(&src).unwrap();
        prop_assert_eq!(back.shape(), &src[..]);
        for (b, v) in back.data().iter().zip(x.data()) {
            prop_assert!((b - copies * v).abs() <= 1e-12 * copies * v.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(xs in values(6), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        with_precision(Precision::F64, || {
            let p = Node::parameter(Array::from_vec(xs.clone())).unwrap();
            let grad = |f: &dyn Fn() -> gradflow::Result<Node>| {
                f().unwrap().compute_gradient().unwrap();
                p.partial().unwrap()
            };
            let f1 = || ops::sum(ops::times(ops::sin(&p)?, a)?);
            let f2 = || ops::sum(ops::times(ops::power(&p, 2.0)?, b)?);
            let g1 = grad(&f1);
            let g2 = grad(&f2);
            let both = grad(&|| ops::add(f1()?, f2()?));
            for ((x, y), z) in g1.data().iter().zip(g2.data()).zip(both.data()) {
                prop_assert!((x + y - z).abs() < 1e-12);
            }
            Ok(())
        })?;
    }

    #[test]
    fn elementwise_ops_commute_with_permutation(
        xs in prop::collection::vec(0.1f64..5.0, 1..12),
        rot in 0usize..12,
    ) {
        let n = xs.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
        with_precision(Precision::F64, || {
            type Unary = fn(&Node) -> gradflow::Result<Node>;
            let unary: [Unary; 8] = [
                |x| ops::exponential(x),
                |x| ops::log(x),
                |x| ops::sqrt(x),
                |x| ops::sin(x),
                |x| ops::cos(x),
                |x| ops::tanh(x),
                |x| ops::absolute_value(x),
                |x| ops::power(x, 1.5),
            ];
            for f in unary {
                let y = f(&Node::constant(Array::from_vec(xs.clone()))).unwrap();
                let yp = f(&Node::constant(Array::from_vec(permuted.clone()))).unwrap();
                let (y, yp) = (y.value().data().to_vec(), yp.value().data().to_vec());
                for (k, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(yp[k], y[i]);
                }
            }
            Ok(())
        })?;
    }

    #[test]
    fn correlating_with_unit_kernel_is_identity(xs in values(8)) {
        with_precision(Precision::F64, || {
            let y = ops::cross_correlate(Array::from_vec(xs.clone()), vec![1.0]).unwrap();
            let out = y.value().data().to_vec();
            prop_assert_eq!(out, xs.clone());
            Ok(())
        })?;
    }

    #[test]
    fn routing_ops_conserve_gradient_mass(
        xs in values(12),
        weights in values(12),
        cut in 0usize..=12,
        width in prop::sample::select(vec![1usize, 2, 3, 4, 6]),
    ) {
        with_precision(Precision::F64, || {
            let p = Node::parameter(Array::from_vec(xs.clone())).unwrap();
            let mass = |out: Node, w: &[f64]| {
                let upstream: f64 = w.iter().sum();
                ops::dot(out, w.to_vec()).unwrap().compute_gradient().unwrap();
                (p.partial().unwrap().sum(), upstream)
            };
            let checks = [
                mass(ops::slice(&p, cut, 12).unwrap(), &weights[cut..]),
                mass(ops::maxpool(&p, width).unwrap(), &weights[..12 / width]),
                mass(
                    ops::concatenate(&[ops::slice(&p, 0, cut).unwrap(), ops::slice(&p, cut, 12).unwrap()]).unwrap(),
                    &weights,
                ),
            ];
            for (got, expect) in checks {
                prop_assert!((got - expect).abs() < 1e-9);
            }
            Ok(())
        })?;
    }

    #[test]
    fn f32_arrays_hold_f32_values(xs in prop::collection::vec(-1e6f64..1e6, 0..20)) {
        let a = Array::with_precision(vec![xs.len()], xs, Precision::F32).unwrap();
        for &v in a.data() {
            prop_assert_eq!(v, v as f32 as f64);
        }
    }

    #[test]
    fn growth_stops_for_good_after_first_shrink(
        losses in prop::collection::vec(0.0f64..10.0, 1..200),
        m in 1usize..20,
    ) {
        let config = OptimizerConfig { m, ..Default::default() };
        let mut c = StepSizeController::new(&config);
        let mut prev_s = config.s0;
        let mut seen_false = false;
        for l in losses {
            let obs = c.observe(l);
            prop_assert!(obs.s > 0.0);
            if seen_false {
                prop_assert!(!obs.r);
                prop_assert!(obs.s <= prev_s);
            }
            match obs.action {
                StepAction::Grow => prop_assert!(obs.d1 < 0.0 && obs.s > prev_s),
                StepAction::Shrink => prop_assert!(obs.d1 > 0.0 && obs.d2 > 0.0 && obs.s < prev_s),
                StepAction::Hold => prop_assert_eq!(obs.s, prev_s),
            }
            seen_false |= !obs.r;
            prev_s = obs.s;
            prop_assert_eq!(c.smoothed().len(), 4);
            prop_assert!(c.raw_losses().len() <= m);
        }
    }
}
