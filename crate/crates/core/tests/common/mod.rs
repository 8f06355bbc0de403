//! Independent dense oracles shared by the integration tests.
//!
//! Nothing here calls the library's assembly, quadrature or solver code:
//! element integrals come from the closed form
//! `int_K l1^a l2^b l3^c = 2 |K| a! b! c! / (a + b + c + 2)!` and
//! basis gradients from inverting the affine map `[1 x y]`.

#![allow(dead_code)]

use std::sync::Arc;

use chcross::mesh::Mesh;

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `int_K l1^e0 l2^e1 l3^e2`.
pub fn barycentric_monomial(area: f64, e: [u32; 3]) -> f64 {
    2.0 * area * factorial(e[0]) * factorial(e[1]) * factorial(e[2]) / factorial(e[0] + e[1] + e[2] + 2)
}

/// Gradients of the three hat functions and the area, by solving
/// `[1 x_i y_i] [a b c]^T = e_k` with Cramer's rule.
pub fn hat_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let m = [[1.0, p[0][0], p[0][1]], [1.0, p[1][0], p[1][1]], [1.0, p[2][0], p[2][1]]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(m);
    let mut grads = [[0.0; 2]; 3];
    for (k, g) in grads.iter_mut().enumerate() {
        for (col, slot) in [(1usize, 0usize), (2, 1)] {
            let mut mk = m;
            for (row, r) in mk.iter_mut().enumerate() {
                r[col] = if row == k { 1.0 } else { 0.0 };
            }
            g[slot] = det3(mk) / d;
        }
    }
    (grads, 0.5 * d.abs())
}

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(n: usize, m: usize) -> Dense {
    vec![vec![0.0; m]; n]
}

fn element_points(mesh: &Mesh, nodes: &[usize; 3]) -> [[f64; 2]; 3] {
    nodes.map(|k| mesh.nodes()[k])
}

fn unit(k: usize) -> [u32; 3] {
    let mut e = [0; 3];
    e[k] += 1;
    e
}

fn add(a: [u32; 3], b: [u32; 3]) -> [u32; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn dense_mass(mesh: &Mesh) -> Dense {
    let n = mesh.node_count();
    let mut m = zeros(n, n);
    for nodes in mesh.elements() {
        let (_, area) = hat_gradients(element_points(mesh, nodes));
        for a in 0..3 {
            for b in 0..3 {
                m[nodes[a]][nodes[b]] += barycentric_monomial(area, add(unit(a), unit(b)));
            }
        }
    }
    m
}

/// `sum_K (int_K w^p) grad l_a . grad l_b` with `w` nodal and `p` in {0, 1, 2}.
pub fn dense_weighted_stiffness(mesh: &Mesh, w: &[f64], p: u32) -> Dense {
    let n = mesh.node_count();
    let mut k = zeros(n, n);
    for nodes in mesh.elements() {
        let (g, area) = hat_gradients(element_points(mesh, nodes));
        let weight = match p {
            0 => area,
            1 => (0..3).map(|a| w[nodes[a]] * barycentric_monomial(area, unit(a))).sum(),
            2 => {
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += w[nodes[a]] * w[nodes[b]] * barycentric_monomial(area, add(unit(a), unit(b)));
                    }
                }
                s
            }
            _ => panic!("unsupported power"),
        };
        for a in 0..3 {
            for b in 0..3 {
                k[nodes[a]][nodes[b]] += weight * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
    }
    k
}

pub fn dense_stiffness(mesh: &Mesh) -> Dense {
    dense_weighted_stiffness(mesh, &[], 0)
}

/// `int (phi_h^3 - phi_h) l_i`, expanded into barycentric monomials.
pub fn dense_cubic_load(mesh: &Mesh, phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.node_count()];
    for nodes in mesh.elements() {
        let (_, area) = hat_gradients(element_points(mesh, nodes));
        let v = nodes.map(|k| phi[k]);
        for i in 0..3 {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let e = add(add(add(unit(a), unit(b)), unit(c)), unit(i));
                        s += v[a] * v[b] * v[c] * barycentric_monomial(area, e);
                    }
                }
                s -= v[a] * barycentric_monomial(area, add(unit(a), unit(i)));
            }
            out[nodes[i]] += s;
        }
    }
    out
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn lin(terms: &[(f64, &Dense)]) -> Dense {
    let n = terms[0].1.len();
    let m = terms[0].1[0].len();
    let mut out = zeros(n, m);
    for (s, a) in terms {
        for i in 0..n {
            for j in 0..m {
                out[i][j] += s * a[i][j];
            }
        }
    }
    out
}

/// Dense matrix and right-hand side of one step for the untruncated well,
/// unknowns ordered `(phi, c, mu)`.
pub struct DenseStep {
    pub matrix: Dense,
    pub rhs: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn dense_step(mesh: &Mesh, phi: &[f64], c: &[f64], tau: f64, eps: f64, s: f64, g: f64) -> DenseStep {
    let n = mesh.node_count();
    let m = dense_mass(mesh);
    let k = dense_stiffness(mesh);
    let kc = dense_weighted_stiffness(mesh, c, 1);
    let kc2 = dense_weighted_stiffness(mesh, c, 2);
    let inv_eps2 = 1.0 / (eps * eps);
    let blocks: [[Dense; 3]; 3] = [
        [lin(&[(1.0 / tau, &m)]), lin(&[(-1.0, &kc)]), k.clone()],
        [zeros(n, n), lin(&[(1.0 / tau, &m), (1.0, &kc2), (g, &k)]), lin(&[(-1.0, &kc)])],
        [lin(&[(-1.0, &k), (-s * inv_eps2, &m)]), m.clone(), m.clone()],
    ];
    let mut matrix = zeros(3 * n, 3 * n);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, b) in row.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    matrix[bi * n + i][bj * n + j] = b[i][j];
                }
            }
        }
    }
    let mphi = matvec(&m, phi);
    let mc = matvec(&m, c);
    let kcphi = matvec(&kc, phi);
    let kc2_gk = lin(&[(1.0, &kc2), (g, &k)]);
    let coupled = matvec(&kc2_gk, phi);
    let load = dense_cubic_load(mesh, phi);
    let mut rhs = vec![0.0; 3 * n];
    for i in 0..n {
        rhs[i] = mphi[i] / tau - kcphi[i];
        rhs[n + i] = mc[i] / tau + coupled[i];
        rhs[2 * n + i] = inv_eps2 * load[i] - s * inv_eps2 * mphi[i];
    }
    DenseStep { matrix, rhs }
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Dense = a.iter().zip(b).map(|(row, &r)| {
        let mut v = row.clone();
        v.push(r);
        v
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn box_mesh(n: usize) -> Arc<Mesh> {
    let l = 2.0 * std::f64::consts::PI;
    Mesh::rectangle(0.0, l, 0.0, l, n, n).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
