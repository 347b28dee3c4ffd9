//! Independent reference implementations used as test oracles. Everything
//! here works on nested `Vec`s with explicit loops so that it shares no code
//! path with the library's ndarray implementation.

#![allow(dead_code)]

use angc::ngc::{Activation, NgcConfig, NgcModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &ndarray::Array2<f64>) -> Mat {
    a.outer_iter().map(|row| row.to_vec()).collect()
}

pub fn phi(act: Activation, v: f64) -> f64 {
    match act {
        Activation::Identity => v,
        Activation::Tanh => v.tanh(),
        Activation::Relu => {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        }
        Activation::Relu6 => v.clamp(0.0, 6.0),
    }
}

pub fn matvec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..v.len() {
                s += row[j] * v[j];
            }
            s
        })
        .collect()
}

/// Ancestral pass, one layer at a time.
pub fn forward_oracle(cfg: &NgcConfig, w: &[Mat], x_in: &[f64]) -> Vec<f64> {
    let depth = cfg.layer_dims.len() - 1;
    let mut z = x_in.to_vec();
    for l in (0..depth).rev() {
        let a: Vec<f64> = z.iter().map(|&v| phi(cfg.activations[l + 1], v)).collect();
        z = matvec(&w[l], &a);
    }
    z
}

/// States and errors after settling, transcribed line by line from the
/// inference loop: zero interior states, `e^0 = z^0`, then K rounds of
/// state corrections (layers 1..L-1) followed by predictions and errors
/// (layers L-1 down to 0).
pub fn settle_oracle(cfg: &NgcConfig, w: &[Mat], e_syn: &[Mat], x_in: &[f64], x_out: &[f64]) -> (Mat, Mat) {
    let dims = &cfg.layer_dims;
    let depth = dims.len() - 1;
    let p = 1.0 / (2.0 * cfg.beta_e);
    let mut z: Mat = dims.iter().map(|&j| vec![0.0; j]).collect();
    z[0] = x_out.to_vec();
    z[depth] = x_in.to_vec();
    let mut e: Mat = dims[..depth].iter().map(|&j| vec![0.0; j]).collect();
    e[0] = z[0].clone();
    for _k in 0..cfg.k_steps {
        for l in 1..depth {
            let fb = matvec(&e_syn[l - 1], &e[l - 1]);
            for i in 0..dims[l] {
                z[l][i] = z[l][i] + cfg.beta * (-cfg.gamma_v * z[l][i] - e[l][i] + fb[i]);
            }
        }
        for l in (0..depth).rev() {
            let above: Vec<f64> = z[l + 1].iter().map(|&v| phi(cfg.activations[l + 1], v)).collect();
            let zbar = matvec(&w[l], &above);
            for i in 0..dims[l] {
                e[l][i] = p * (phi(cfg.activations[l], z[l][i]) - zbar[i]);
            }
        }
    }
    (z, e)
}

/// Total discrepancy at fixed states for arbitrary forward weights.
pub fn discrepancy_at(cfg: &NgcConfig, w: &[Mat], z: &Mat) -> f64 {
    let depth = cfg.layer_dims.len() - 1;
    let p = 1.0 / (2.0 * cfg.beta_e);
    let mut total = 0.0;
    for l in 0..depth {
        let above: Vec<f64> = z[l + 1].iter().map(|&v| phi(cfg.activations[l + 1], v)).collect();
        let zbar = matvec(&w[l], &above);
        for i in 0..z[l].len() {
            let e = p * (phi(cfg.activations[l], z[l][i]) - zbar[i]);
            total += p * e * e;
        }
    }
    total
}

/// Central-difference gradient of [`discrepancy_at`] w.r.t. `W^{layer+1}`.
pub fn fd_gradient(cfg: &NgcConfig, w: &[Mat], z: &Mat, layer: usize, h: f64) -> Mat {
    let mut grad = w[layer].clone();
    for i in 0..w[layer].len() {
        for j in 0..w[layer][i].len() {
            let mut plus = w.to_vec();
            plus[layer][i][j] += h;
            let mut minus = w.to_vec();
            minus[layer][i][j] -= h;
            grad[i][j] = (discrepancy_at(cfg, &plus, z) - discrepancy_at(cfg, &minus, z)) / (2.0 * h);
        }
    }
    grad
}

pub const ACTIVATIONS: [Activation; 4] = [Activation::Identity, Activation::Tanh, Activation::Relu, Activation::Relu6];

/// A random circuit no wider than `[4, 8, 4]` with N(0, std²) weights, plus
/// a random clamp pair.
pub struct RandomCircuit {
    pub model: NgcModel,
    pub x_in: Vec<f64>,
    pub x_out: Vec<f64>,
}

pub fn random_circuit(seed: u64, weight_std: f64) -> RandomCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j0 = rng.gen_range(1..=4);
    let j1 = rng.gen_range(1..=8);
    let j2 = rng.gen_range(1..=4);
    let act = ACTIVATIONS[rng.gen_range(0..ACTIVATIONS.len())];
    let mut cfg = NgcConfig::new(j2, &[j1], j0, act);
    cfg.init_std = weight_std;
    let model = NgcModel::init(cfg, rng.gen()).unwrap();
    let n = Normal::new(0.0, 1.0).unwrap();
    let x_in = (0..j2).map(|_| n.sample(&mut rng)).collect();
    let x_out = (0..j0).map(|_| n.sample(&mut rng)).collect();
    RandomCircuit { model, x_in, x_out }
}
