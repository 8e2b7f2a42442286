//! Fixed composite Gauss–Legendre rule on (0, 1).
//!
//! Panels halve geometrically toward both endpoints so integrands involving
//! the Gaussian quantile function, which diverges logarithmically at 0 and 1,
//! are resolved. 80 panels × 25 nodes = 2000 nodes.

use std::sync::OnceLock;

const NODES_PER_PANEL: usize = 25;
const PANELS_PER_SIDE: usize = 40;

/// A node of the unit-interval rule. `lower` is `min(t, 1 − t)` stored exactly
/// so that functions with endpoint behaviour can be evaluated without
/// cancellation; `upper_half` tells which side of 1/2 the node is on.
#[derive(Debug, Clone, Copy)]
pub struct UnitNode {
    pub lower: f64,
    pub upper_half: bool,
    pub weight: f64,
}

impl UnitNode {
    #[inline]
    pub fn t(&self) -> f64 {
        if self.upper_half {
            1.0 - self.lower
        } else {
            self.lower
        }
    }

    #[inline]
    pub fn one_minus_t(&self) -> f64 {
        if self.upper_half {
            self.lower
        } else {
            1.0 - self.lower
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn build_unit_rule() -> Vec<UnitNode> {
    let gl = gauss_legendre(NODES_PER_PANEL);
    // breakpoints on [0, 1/2]: 0, 2^-40, ..., 2^-1
    let mut breaks = vec![0.0];
    for e in (1..=PANELS_PER_SIDE).rev() {
        breaks.push(0.5f64.powi(e as i32));
    }
    let mut nodes = Vec::with_capacity(2 * PANELS_PER_SIDE * NODES_PER_PANEL);
    for upper_half in [false, true] {
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, wt) in &gl {
                nodes.push(UnitNode {
                    lower: mid + half * x,
                    upper_half,
                    weight: half * wt,
                });
            }
        }
    }
    nodes
}

/// The shared 2000-node rule.
pub fn unit_rule() -> &'static [UnitNode] {
    static RULE: OnceLock<Vec<UnitNode>> = OnceLock::new();
    RULE.get_or_init(build_unit_rule)
}
