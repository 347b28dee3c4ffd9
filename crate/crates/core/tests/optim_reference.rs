use angc::optim::{OptimState, UpdateRule};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adam on a flat parameter list.
struct RefAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl RefAdam {
    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        for i in 0..p.len() {
            self.m[i] = 0.9 * self.m[i] + 0.1 * g[i];
            self.v[i] = 0.999 * self.v[i] + 0.001 * g[i] * g[i];
            let mh = self.m[i] / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v[i] / (1.0 - 0.999f64.powi(self.t));
            p[i] += lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}

fn ref_rmsprop(v: &mut [f64], p: &mut [f64], g: &[f64], lr: f64) {
    for i in 0..p.len() {
        v[i] = 0.9 * v[i] + 0.1 * g[i] * g[i];
        p[i] += lr * g[i] / (v[i].sqrt() + 1e-8);
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn adam_matches_reference_over_100_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = (3, 5);
    let mut p = random_matrix(&mut rng, shape);
    let mut flat: Vec<f64> = p.iter().copied().collect();
    let mut st = OptimState::new(UpdateRule::Adam, 0.003, shape);
    let mut r = RefAdam {
        m: vec![0.0; 15],
        v: vec![0.0; 15],
        t: 0,
    };
    for _ in 0..100 {
        let g = random_matrix(&mut rng, shape);
        st.step(&mut p, g.view()).unwrap();
        r.step(&mut flat, &g.iter().copied().collect::<Vec<_>>(), 0.003);
        for (a, b) in p.iter().zip(&flat) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    assert_eq!(st.steps, 100);
}

#[test]
fn rmsprop_matches_reference_over_100_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let shape = (4, 2);
    let mut p = random_matrix(&mut rng, shape);
    let mut flat: Vec<f64> = p.iter().copied().collect();
    let mut v = vec![0.0; 8];
    let mut st = OptimState::new(UpdateRule::Rmsprop, 5e-4, shape);
    for _ in 0..100 {
        let g = random_matrix(&mut rng, shape);
        st.step(&mut p, g.view()).unwrap();
        ref_rmsprop(&mut v, &mut flat, &g.iter().copied().collect::<Vec<_>>(), 5e-4);
        for (a, b) in p.iter().zip(&flat) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn sgd_is_linear_in_the_delta(
        p in prop::collection::vec(-5.0f64..5.0, 6),
        d in prop::collection::vec(-5.0f64..5.0, 6),
        a in -4.0f64..4.0,
        eta in 1e-4f64..1.0,
    ) {
        let p = Array2::from_shape_vec((2, 3), p).unwrap();
        let d = Array2::from_shape_vec((2, 3), d).unwrap();
        let step = |delta: &Array2<f64>| {
            let mut q = p.clone();
            OptimState::new(UpdateRule::Sgd, eta, (2, 3)).step(&mut q, delta.view()).unwrap();
            q - &p
        };
        let lhs = step(&(&d * a));
        let rhs = step(&d) * a;
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn zero_delta_is_a_fixed_point(rule in prop::sample::select(vec![UpdateRule::Sgd, UpdateRule::Adam, UpdateRule::Rmsprop]), steps in 1usize..20) {
        let mut p = Array2::from_shape_fn((2, 2), |(i, j)| i as f64 - 0.5 * j as f64);
        let before = p.clone();
        let mut st = OptimState::new(rule, 0.1, (2, 2));
        for _ in 0..steps {
            st.step(&mut p, Array2::zeros((2, 2)).view()).unwrap();
        }
        prop_assert_eq!(p, before);
    }
}
