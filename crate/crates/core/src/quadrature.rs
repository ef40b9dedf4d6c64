//! Triangle quadrature from collapsed Gauss-Legendre products.

/// Quadrature on the reference triangle. Points are barycentric and weights
/// sum to one, so physical weights are `weight * |T|`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Smallest collapsed product rule exact for total degree `degree`.
    ///
    /// The Duffy map `x = s (1 - r), y = r` turns `x^a y^b` into a polynomial
    /// of degree `a` in `s` and `a + b + 1` in `r`, so `n` Gauss points per
    /// direction integrate total degree `2n - 2` exactly.
    pub fn with_degree(degree: usize) -> Self {
        let n = degree.div_ceil(2) + 1;
        let (nodes, weights) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut w = Vec::with_capacity(n * n);
        for (r, wr) in nodes.iter().zip(&weights) {
            for (s, ws) in nodes.iter().zip(&weights) {
                let x = s * (1.0 - r);
                let y = *r;
                points.push([1.0 - x - y, x, y]);
                // reference area 1/2 normalised away
                w.push(2.0 * wr * ws * (1.0 - r));
            }
        }
        QuadratureRule { points, weights: w, degree: 2 * n - 2 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        // map [-1,1] -> [0,1]
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
