//! Uniform 1D mesh with a nodal Lagrange basis at Gauss-Lobatto points.
//!
//! The element matrices are assembled by exact Gauss-Legendre integration of
//! the Lagrange basis products, so the mass matrix is the full (non-lumped)
//! one and `S + Sᵀ = φ(1)φ(1)ᵀ − φ(−1)φ(−1)ᵀ` holds to round-off.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Legendre polynomial P_n and its derivative at `x`, by recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // (1-x²) P_n' = n (P_{n-1} - x P_n)
    let dp = if x.abs() < 1.0 {
        n as f64 * (p_prev - x * p) / (1.0 - x * x)
    } else {
        // endpoint limit: P_n'(±1) = ±1^{n-1} n(n+1)/2
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 - 1) };
        sign * n as f64 * (n as f64 + 1.0) / 2.0
    };
    (p, dp)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss-Lobatto nodes and weights on [-1, 1] (endpoints included).
///
/// Interior nodes are the roots of P'_{n-1}; weights are 2/(n(n-1) P_{n-1}²).
pub fn gauss_lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    let m = n - 1;
    for i in 1..m {
        // Interlacing initial guess, then Newton on P'_{n-1}.
        let mut x = -((std::f64::consts::PI * i as f64) / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, x);
            // d/dx P'_m from the Legendre ODE: (1-x²)P'' = 2xP' - m(m+1)P
            let ddp = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
    }
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let (p, _) = legendre(m, nodes[i]);
        weights[i] = 2.0 / ((n * m) as f64 * p * p);
    }
    (nodes, weights)
}

/// Barycentric weights for Lagrange interpolation through `nodes`.
fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i] /= nodes[i] - nodes[j];
            }
        }
    }
    w
}

/// Evaluate all Lagrange basis polynomials at `x`.
pub fn lagrange_eval(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if (x - nodes[i]).abs() < 1e-14 {
            out[i] = 1.0;
            return out;
        }
    }
    let mut denom = 0.0;
    for i in 0..n {
        let term = bary[i] / (x - nodes[i]);
        out[i] = term;
        denom += term;
    }
    for v in &mut out {
        *v /= denom;
    }
    out
}

/// Invert a small dense matrix (Gauss-Jordan with partial pivoting).
pub fn invert(mat: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut a = mat.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Config("singular matrix".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
                inv.swap(col * n + c, pivot * n + c);
            }
        }
        let diag = a[col * n + col];
        for c in 0..n {
            a[col * n + c] /= diag;
            inv[col * n + c] /= diag;
        }
        for r in 0..n {
            if r != col {
                let f = a[r * n + col];
                if f != 0.0 {
                    for c in 0..n {
                        a[r * n + c] -= f * a[col * n + c];
                        inv[r * n + c] -= f * inv[col * n + c];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Element mass treatment.
///
/// `Exact` integrates the Lagrange basis products with full Gauss
/// quadrature. `Lumped` is the collocation variant (M = diag of the
/// Gauss-Lobatto weights); it is slightly more dispersive and is the
/// conventional choice in nodal DG shock codes, so the published
/// comparison tables are reproduced with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassMatrix {
    #[default]
    Exact,
    Lumped,
}

impl MassMatrix {
    pub fn parse(name: &str) -> Result<MassMatrix> {
        match name {
            "exact" => Ok(MassMatrix::Exact),
            "lumped" => Ok(MassMatrix::Lumped),
            other => Err(Error::Config(format!("unknown mass treatment '{other}' (exact|lumped)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MassMatrix::Exact => "exact",
            MassMatrix::Lumped => "lumped",
        }
    }
}

/// Boundary treatment shared by the DG and FV meshes.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Ghost states pinned to the given conservative values.
    Dirichlet { left: Vec<f64>, right: Vec<f64> },
}

impl Boundary {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

/// Uniform DG mesh plus the per-element operators.
#[derive(Debug, Clone)]
pub struct DgMesh {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    /// Nodes per cell; the local polynomial degree is p - 1.
    pub p: usize,
    pub dx: f64,
    /// Gauss-Lobatto nodes on [-1, 1].
    pub nodes: Vec<f64>,
    /// Gauss-Lobatto quadrature weights.
    pub weights: Vec<f64>,
    /// Mass matrix M[k][l] = ∫ φ_k φ_l (exact).
    pub mass: Vec<f64>,
    /// Stiffness matrix S[k][l] = ∫ φ_k φ_l'.
    pub stiffness: Vec<f64>,
    /// Nodal differentiation matrix D[k][l] = φ_l'(node_k).
    pub diff: Vec<f64>,
    pub boundary: Boundary,
    pub lumping: MassMatrix,
    /// M⁻¹ as a tensor, laid out for right-multiplication of [.., p] data.
    pub mass_inv_t: Tensor,
    /// S laid out for right-multiplication: (U S)_k = Σ_l U_l S[l][k].
    pub stiffness_t: Tensor,
    /// Row (0,...,0,1) selecting the right face contribution.
    pub face_right_t: Tensor,
    /// Row (1,0,...,0) selecting the left face contribution.
    pub face_left_t: Tensor,
}

impl DgMesh {
    pub fn build(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        p: usize,
        boundary: Boundary,
    ) -> Result<DgMesh> {
        Self::build_with_mass(x_min, x_max, n_x, p, boundary, MassMatrix::Exact)
    }

    pub fn build_with_mass(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        p: usize,
        boundary: Boundary,
        lumping: MassMatrix,
    ) -> Result<DgMesh> {
        if n_x < 2 || p < 2 || x_max <= x_min {
            return Err(Error::Config(format!(
                "mesh needs n_x >= 2, p >= 2 and x_max > x_min (got n_x={n_x}, p={p})"
            )));
        }
        let (nodes, weights) = gauss_lobatto(p);
        let bary = barycentric_weights(&nodes);

        // Quadrature exact for degree 2p-2 (mass integrand) needs p points.
        let (qx, qw) = gauss_legendre(p);
        let mut mass = vec![0.0; p * p];
        let mut stiffness = vec![0.0; p * p];
        for (q, &x) in qx.iter().enumerate() {
            let phi = lagrange_eval(&nodes, &bary, x);
            let dphi = lagrange_deriv(&nodes, &bary, x);
            for k in 0..p {
                for l in 0..p {
                    mass[k * p + l] += qw[q] * phi[k] * phi[l];
                    stiffness[k * p + l] += qw[q] * phi[k] * dphi[l];
                }
            }
        }

        // Nodal differentiation matrix: D[k][l] = φ_l'(node_k).
        let mut diff = vec![0.0; p * p];
        for (k, &x) in nodes.iter().enumerate() {
            let dphi = lagrange_deriv(&nodes, &bary, x);
            diff[k * p..(k + 1) * p].copy_from_slice(&dphi);
        }

        let (mass, mass_inv) = match lumping {
            MassMatrix::Exact => {
                let inv = invert(&mass, p)?;
                (mass, inv)
            }
            MassMatrix::Lumped => {
                let mut m = vec![0.0; p * p];
                let mut inv = vec![0.0; p * p];
                for k in 0..p {
                    m[k * p + k] = weights[k];
                    inv[k * p + k] = 1.0 / weights[k];
                }
                (m, inv)
            }
        };
        // (X M⁻¹)_k = Σ_l X_l (M⁻¹)[l][k]; M⁻¹ is symmetric so the layout
        // matches matmul_last directly. Same for S: (U S)_k = Σ_l U_l S[l][k].
        let mass_inv_t = Tensor::from_vec(vec![p, p], mass_inv);
        let stiffness_t = Tensor::from_vec(vec![p, p], stiffness.clone());

        let mut right = vec![0.0; p];
        right[p - 1] = 1.0;
        let mut left = vec![0.0; p];
        left[0] = 1.0;

        let mesh = DgMesh {
            x_min,
            x_max,
            n_x,
            p,
            dx: (x_max - x_min) / n_x as f64,
            nodes,
            weights,
            mass,
            stiffness,
            diff,
            boundary,
            lumping,
            mass_inv_t,
            stiffness_t,
            face_right_t: Tensor::from_vec(vec![1, p], right),
            face_left_t: Tensor::from_vec(vec![1, p], left),
        };
        mesh.check_operator_identity()?;
        Ok(mesh)
    }

    /// S + Sᵀ must equal the boundary evaluation matrix e_p e_pᵀ − e_1 e_1ᵀ.
    fn check_operator_identity(&self) -> Result<()> {
        let p = self.p;
        for k in 0..p {
            for l in 0..p {
                let lhs = self.stiffness[k * p + l] + self.stiffness[l * p + k];
                let mut rhs = 0.0;
                if k == p - 1 && l == p - 1 {
                    rhs += 1.0;
                }
                if k == 0 && l == 0 {
                    rhs -= 1.0;
                }
                if (lhs - rhs).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "stiffness identity violated at ({k},{l}): {lhs} vs {rhs}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Physical coordinate of node `k` in cell `j`.
    pub fn node_x(&self, j: usize, k: usize) -> f64 {
        self.x_min + (j as f64 + 0.5 * (1.0 + self.nodes[k])) * self.dx
    }

    /// All node coordinates, cell-major.
    pub fn all_nodes_x(&self) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.n_x * self.p);
        for j in 0..self.n_x {
            for k in 0..self.p {
                xs.push(self.node_x(j, k));
            }
        }
        xs
    }
}

/// Derivatives of all Lagrange basis polynomials at `x`.
pub fn lagrange_deriv(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    // Differentiation via the barycentric second form is fussy at nodes;
    // for the small p used here the direct product formula is exact enough.
    let _ = bary;
    let mut out = vec![0.0; n];
    for l in 0..n {
        let mut acc = 0.0;
        for m in 0..n {
            if m == l {
                continue;
            }
            let mut term = 1.0 / (nodes[l] - nodes[m]);
            for j in 0..n {
                if j != l && j != m {
                    term *= (x - nodes[j]) / (nodes[l] - nodes[j]);
                }
            }
            acc += term;
        }
        out[l] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lobatto_includes_endpoints() {
        for p in 2..=8 {
            let (nodes, weights) = gauss_lobatto(p);
            assert_eq!(nodes[0], -1.0);
            assert_eq!(nodes[p - 1], 1.0);
            let total: f64 = weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "weights must integrate 1 over [-1,1]");
        }
    }

    #[test]
    fn lobatto_p4_known_nodes() {
        let (nodes, _) = gauss_lobatto(4);
        let inv_sqrt5 = 1.0 / 5.0f64.sqrt();
        assert!((nodes[1] + inv_sqrt5).abs() < 1e-14);
        assert!((nodes[2] - inv_sqrt5).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(4);
        // degree 7 is the highest exact degree for 4 points
        let integral: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(6)).sum();
        assert!((integral - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn p2_mass_and_stiffness_match_hand_integrals() {
        let mesh = DgMesh::build(0.0, 1.0, 4, 2, Boundary::Periodic).unwrap();
        let m = &mesh.mass;
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((m[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((m[2] - 1.0 / 3.0).abs() < 1e-14);
        assert!((m[3] - 2.0 / 3.0).abs() < 1e-14);
        let s = &mesh.stiffness;
        let expected = [-0.5, 0.5, -0.5, 0.5];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "S = {s:?}");
        }
    }

    #[test]
    fn mass_total_is_interval_length() {
        for p in 2..=6 {
            let mesh = DgMesh::build(0.0, 1.0, 4, p, Boundary::Periodic).unwrap();
            let total: f64 = mesh.mass.iter().sum();
            assert!((total - 2.0).abs() < 1e-12, "p={p}: sum M = {total}");
            // row sums of M equal the Gauss-Lobatto weights (∫ φ_k)
            for k in 0..p {
                let row: f64 = mesh.mass[k * p..(k + 1) * p].iter().sum();
                assert!((row - mesh.weights[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn differentiation_matrix_exact_on_polynomials() {
        let mesh = DgMesh::build(0.0, 1.0, 2, 5, Boundary::Periodic).unwrap();
        let p = mesh.p;
        // f(x) = x³ - 2x on [-1,1]; f' = 3x² - 2
        let f: Vec<f64> = mesh.nodes.iter().map(|&x| x * x * x - 2.0 * x).collect();
        for k in 0..p {
            let mut df = 0.0;
            for l in 0..p {
                df += mesh.diff[k * p + l] * f[l];
            }
            let x = mesh.nodes[k];
            assert!((df - (3.0 * x * x - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(DgMesh::build(0.0, 1.0, 1, 4, Boundary::Periodic).is_err());
        assert!(DgMesh::build(0.0, 1.0, 8, 1, Boundary::Periodic).is_err());
        assert!(DgMesh::build(1.0, 0.0, 8, 4, Boundary::Periodic).is_err());
    }

    #[test]
    fn matrix_inverse_roundtrip() {
        let mat = vec![4.0, 7.0, 2.0, 6.0];
        let inv = invert(&mat, 2).unwrap();
        let id = [
            mat[0] * inv[0] + mat[1] * inv[2],
            mat[0] * inv[1] + mat[1] * inv[3],
            mat[2] * inv[0] + mat[3] * inv[2],
            mat[2] * inv[1] + mat[3] * inv[3],
        ];
        assert!((id[0] - 1.0).abs() < 1e-14);
        assert!(id[1].abs() < 1e-14);
        assert!(id[2].abs() < 1e-14);
        assert!((id[3] - 1.0).abs() < 1e-14);
    }
}
