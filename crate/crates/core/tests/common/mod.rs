//! Independent reference computations shared by the oracle and acceptance
//! suites.

#![allow(dead_code)]

use kpm_core::decision::{CostFunctional, GameCloud};
use kpm_core::{GameParams, GamePoint, GameSpace, Region};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `[ξ, ξ̇, a_T, a_M]` with `ξ̈ = a_T − a_M` and first-order lags.
pub type Linear = [f64; 4];

fn rates(x: &Linear, u_m: f64, u_t: f64, tau_m: f64, tau_t: f64) -> Linear {
    [x[1], x[2] - x[3], (u_t - x[2]) / tau_t, (u_m - x[3]) / tau_m]
}

/// Lateral separation at the end of `t_go` with constant commands.
pub fn terminal_miss(x0: Linear, u_m: f64, u_t: f64, t_go: f64, p: &GameParams) -> f64 {
    let (tau_m, tau_t) = (p.tau_m, p.tau_t());
    let steps = ((t_go / 1e-4).ceil() as usize).max(1);
    let h = t_go / steps as f64;
    let mut x = x0;
    let add = |x: &Linear, k: &Linear, s: f64| -> Linear { std::array::from_fn(|i| x[i] + s * k[i]) };
    for _ in 0..steps {
        let k1 = rates(&x, u_m, u_t, tau_m, tau_t);
        let k2 = rates(&add(&x, &k1, h / 2.0), u_m, u_t, tau_m, tau_t);
        let k3 = rates(&add(&x, &k2, h / 2.0), u_m, u_t, tau_m, tau_t);
        let k4 = rates(&add(&x, &k3, h), u_m, u_t, tau_m, tau_t);
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    x[0]
}

pub const MODES: usize = 2;
pub const SIGNS: [f64; MODES] = [1.0, -1.0];

fn hypothesis(game: &GameSpace, p: GamePoint, mode: usize) -> usize {
    match game.classify(p) {
        Region::UpperRegular => 0,
        Region::Singular => 1 + mode,
        Region::LowerRegular => MODES + 1,
    }
}

fn evader(h: usize, mode: usize) -> f64 {
    if h == 0 {
        1.0
    } else if h == MODES + 1 {
        -1.0
    } else {
        SIGNS[mode]
    }
}

fn cost(j: &CostFunctional, miss: f64) -> f64 {
    match j {
        CostFunctional::MissDistance => miss,
        CostFunctional::MissProbability { warhead } => warhead.miss_prob(miss).unwrap(),
    }
}

/// Literal `I_i = Σ_{j≠i} P_j·L_j·(C_ij − C_jj)`.
pub fn literal_risks(game: &GameSpace, cloud: &GameCloud, priors: &[f64], h: f64, j_cost: &CostFunctional) -> Vec<f64> {
    let m = MODES + 2;
    let n = cloud.points.len();
    let hyp: Vec<usize> = (0..n).map(|k| hypothesis(game, cloud.points[k], cloud.modes[k])).collect();
    let total: f64 = cloud.weights.iter().sum();
    let mass: Vec<f64> = (0..m)
        .map(|i| (0..n).filter(|&k| hyp[k] == i).map(|k| cloud.weights[k]).sum::<f64>())
        .collect();
    let lik: Vec<f64> = mass.iter().map(|x| x / total).collect();
    let normalized = |k: usize| cloud.weights[k] / mass[hyp[k]];

    let mut c = vec![vec![0.0; m]; m];
    for j in 0..m {
        if lik[j] == 0.0 {
            continue;
        }
        for jp in (0..n).filter(|&k| hyp[k] == j) {
            let p = cloud.points[jp];
            let v = evader(j, cloud.modes[jp]);
            c[j][j] += normalized(jp) * cost(j_cost, game.miss_value(p));
            for i in (0..m).filter(|&i| i != j) {
                let after = |u: f64| cost(j_cost, game.miss_value(game.propagate(p, h, u, v)));
                if lik[i] > 0.0 {
                    for ip in (0..n).filter(|&k| hyp[k] == i) {
                        let u = game.command(cloud.points[ip]);
                        c[i][j] += normalized(jp) * normalized(ip) * after(u);
                    }
                } else {
                    let u = if i == 0 {
                        1.0
                    } else if i == MODES + 1 {
                        -1.0
                    } else {
                        game.command(p)
                    };
                    c[i][j] += normalized(jp) * after(u);
                }
            }
        }
    }
    (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| priors[j] * lik[j] * (c[i][j] - c[j][j]))
                .sum()
        })
        .collect()
}

pub fn draw_params(rng: &mut ChaCha8Rng) -> GameParams {
    GameParams::new(
        rng.random_range(1.1..4.0),
        rng.random_range(0.2..5.0),
        rng.random_range(0.1..0.4),
        rng.random_range(50.0..300.0),
        1.0,
    )
    .unwrap()
}

pub fn random_cloud(rng: &mut ChaCha8Rng) -> GameCloud {
    let n = rng.random_range(1..=10);
    let mut points = Vec::new();
    let mut modes = Vec::new();
    let mut weights = Vec::new();
    for k in 0..n {
        let tau = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..6.0) };
        points.push(GamePoint::new(rng.random_range(-5.0..5.0), tau));
        modes.push(rng.random_range(0..MODES));
        let zero = k > 0 && rng.random_bool(0.1);
        weights.push(if zero { 0.0 } else { rng.random_range(0.01..1.0) });
    }
    GameCloud::new(points, modes, weights).unwrap()
}
