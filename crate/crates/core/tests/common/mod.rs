//! Reference implementations used as test oracles. They share no code with
//! the library beyond its public data types: apportionment is exact integer
//! arithmetic, W1 is greedy mass transport, the largest deviation is a
//! search over point masses, and chi-square tails are numerical integrals.

#![allow(dead_code)]

use biasengine::domain::{AxisSet, BiasAxis};
use biasengine::providers::SyntheticModel;
use rand::Rng;

/// Joint over product tuples with integer weights, last axis fastest.
#[derive(Debug, Clone)]
pub struct IntModel {
    pub sizes: Vec<usize>,
    pub weights: Vec<u64>,
}

impl IntModel {
    pub fn tuples(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for &k in &self.sizes {
            let mut next = Vec::new();
            for prefix in &out {
                for v in 0..k {
                    let mut t = prefix.clone();
                    t.push(v);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    /// Axes named `a0, a1, ...` with values `v0, v1, ...`.
    pub fn axes(&self) -> AxisSet {
        AxisSet::new(
            self.sizes
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let values: Vec<String> = (0..k).map(|v| format!("v{v}")).collect();
                    let refs: Vec<&str> = values.iter().map(String::as_str).collect();
                    BiasAxis::with_prefix_templates(&format!("a{i}"), &refs).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    pub fn to_model(&self, key: &str) -> SyntheticModel {
        let tuples = self.tuples();
        SyntheticModel::from_fn(self.axes(), key, |idx| {
            let pos = tuples.iter().position(|t| t.as_slice() == idx).unwrap();
            self.weights[pos] as f64
        })
        .unwrap()
    }

    /// Random model with every axis value reachable.
    pub fn random(rng: &mut impl Rng, axes: std::ops::RangeInclusive<usize>, max_k: usize) -> IntModel {
        loop {
            let n_axes = rng.gen_range(axes.clone());
            let sizes: Vec<usize> = (0..n_axes).map(|_| rng.gen_range(2..=max_k)).collect();
            let total: usize = sizes.iter().product();
            let weights: Vec<u64> = (0..total)
                .map(|_| if rng.gen_bool(0.25) { 0 } else { rng.gen_range(1..=4) })
                .collect();
            let m = IntModel { sizes, weights };
            let reachable = (0..m.sizes.len())
                .all(|a| (0..m.sizes[a]).all(|v| m.mass_where(&[(a, v)]) > 0));
            if reachable {
                return m;
            }
        }
    }

    fn mass_where(&self, constraints: &[(usize, usize)]) -> u64 {
        self.tuples()
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| constraints.iter().all(|&(a, v)| t[a] == v))
            .map(|(_, w)| w)
            .sum()
    }

    /// Exact-count generation: condition, then apportion `n` over tuples.
    /// Constraints the joint never satisfies are forced onto every tuple.
    pub fn counts(&self, constraints: &[(usize, usize)], n: u64) -> Vec<u64> {
        let tuples = self.tuples();
        let fits = |t: &[usize]| constraints.iter().all(|&(a, v)| t[a] == v);
        let mut conditioned: Vec<u64> =
            tuples.iter().zip(&self.weights).map(|(t, &w)| if fits(t) { w } else { 0 }).collect();
        if conditioned.iter().all(|&w| w == 0) {
            for (t, &w) in tuples.iter().zip(&self.weights) {
                let mut forced = t.clone();
                for &(a, v) in constraints {
                    forced[a] = v;
                }
                conditioned[tuples.iter().position(|x| *x == forced).unwrap()] += w;
            }
        }
        apportion(n, &conditioned)
    }

    pub fn marginal(&self, counts: &[u64], axis: usize) -> Vec<u64> {
        let mut out = vec![0; self.sizes[axis]];
        for (t, c) in self.tuples().iter().zip(counts) {
            out[t[axis]] += c;
        }
        out
    }

    /// IS from `source` onto `target` on `n`-image exact-count sets.
    pub fn intersectional_sensitivity(&self, source: usize, target: usize, n: u64, ideal: &[f64]) -> f64 {
        let init = self.marginal(&self.counts(&[], n), target);
        let mut pooled = vec![0u64; self.sizes[target]];
        for v in 0..self.sizes[source] {
            for (p, c) in pooled.iter_mut().zip(self.marginal(&self.counts(&[(source, v)], n), target)) {
                *p += c;
            }
        }
        normalized_bias(&normalize(&init), ideal) - normalized_bias(&normalize(&pooled), ideal)
    }
}

/// Largest remainder in exact integer arithmetic, ties to the lower index.
pub fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let mass: u128 = weights.iter().map(|&w| w as u128).sum();
    assert!(mass > 0);
    let mut shares: Vec<u64> = weights.iter().map(|&w| (total as u128 * w as u128 / mass) as u64).collect();
    let rems: Vec<u128> = weights.iter().map(|&w| total as u128 * w as u128 % mass).collect();
    let mut leftover = total - shares.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    shares
}

pub fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Earth mover's distance on unit-spaced points by moving mass greedily
/// from left to right.
pub fn w1_transport(source: &[f64], target: &[f64]) -> f64 {
    let mut supply = source.to_vec();
    let mut demand = target.to_vec();
    let (mut i, mut j) = (0, 0);
    let mut cost = 0.0;
    while i < supply.len() && j < demand.len() {
        if supply[i] <= 1e-15 {
            i += 1;
            continue;
        }
        if demand[j] <= 1e-15 {
            j += 1;
            continue;
        }
        let moved = supply[i].min(demand[j]);
        cost += moved * (i as f64 - j as f64).abs();
        supply[i] -= moved;
        demand[j] -= moved;
    }
    cost
}

pub fn point_mass(k: usize, at: usize) -> Vec<f64> {
    (0..k).map(|i| if i == at { 1.0 } else { 0.0 }).collect()
}

/// Largest W1 from `ideal` over every point mass.
pub fn max_deviation(ideal: &[f64]) -> f64 {
    (0..ideal.len())
        .map(|i| w1_transport(&point_mass(ideal.len(), i), ideal))
        .fold(0.0, f64::max)
}

pub fn normalized_bias(d: &[f64], ideal: &[f64]) -> f64 {
    let m = max_deviation(ideal);
    if m == 0.0 {
        0.0
    } else {
        w1_transport(d, ideal) / m
    }
}

pub fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Pearson statistic after dropping all-zero rows and columns.
pub fn chi_square_statistic(table: &[Vec<u64>]) -> (f64, usize) {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let cols: Vec<usize> = (0..table[0].len()).filter(|&j| rows.iter().map(|r| r[j]).sum::<u64>() > 0).collect();
    let n: f64 = rows.iter().flat_map(|r| r.iter()).sum::<u64>() as f64;
    let mut stat = 0.0;
    for r in &rows {
        let rt: f64 = r.iter().sum::<u64>() as f64;
        for &j in &cols {
            let ct: f64 = rows.iter().map(|r| r[j]).sum::<u64>() as f64;
            let e = rt * ct / n;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    (stat, (rows.len() - 1) * (cols.len() - 1))
}

/// Gamma at integer and half-integer points, in closed form.
fn gamma_half(twice: usize) -> f64 {
    if twice.is_multiple_of(2) {
        (1..twice / 2).map(|i| i as f64).product()
    } else {
        let n = twice / 2;
        let mut g = std::f64::consts::PI.sqrt();
        for i in 0..n {
            g *= i as f64 + 0.5;
        }
        g
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Chi-square upper tail by integrating the density. The substitution
/// `x = u^2` removes the singularity at zero for one degree of freedom.
pub fn chi_square_tail(statistic: f64, dof: usize) -> f64 {
    let k = dof as f64;
    let norm = 2f64.powf(k / 2.0) * gamma_half(dof);
    let density_u = |u: f64| 2.0 * u.powf(k - 1.0) * (-u * u / 2.0).exp() / norm;
    let cdf = simpson(density_u, 0.0, statistic.max(0.0).sqrt(), 200_000);
    (1.0 - cdf).clamp(0.0, 1.0)
}
