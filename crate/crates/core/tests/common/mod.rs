//! Independent reference implementations and random instance generators
//! shared by the integration tests. Nothing here calls into the solver
//! paths it is used to check.

#![allow(dead_code)]

pub mod mock;

use rand::rngs::StdRng;
use rand::Rng;
use unweaver::Matrix;

/// Gaussian elimination with full pivoting on a dense copy; used to check the
/// LU-based solvers.
pub fn gauss_full_pivot(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut row = r.clone();
            row.push(bi);
            row
        })
        .collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for r in k..n {
            for c in k..n {
                if m[r][c].abs() > best {
                    best = m[r][c].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        if best < 1e-13 {
            return None;
        }
        m.swap(k, pr);
        for row in m.iter_mut() {
            row.swap(k, pc);
        }
        col_perm.swap(k, pc);
        for r in 0..n {
            if r != k {
                let f = m[r][k] / m[k][k];
                for c in k..=n {
                    m[r][c] -= f * m[k][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_perm[k]] = m[k][n] / m[k][k];
    }
    Some(x)
}

/// KKT system of the constrained least-squares problem, assembled from
/// scratch with plain loops.
pub fn cls_kkt_oracle(c: &[Vec<f64>], v: &[Vec<f64>], q: &[f64], f: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = c.len();
    let s = c[0].len();
    let p = v.len();
    let n = s + k;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..s {
        for j in 0..s {
            a[i][j] = (0..p).map(|r| v[r][i] * v[r][j]).sum();
        }
        b[i] = (0..p).map(|r| v[r][i] * q[r]).sum();
        for r in 0..k {
            a[i][s + r] = c[r][i];
            a[s + r][i] = c[r][i];
        }
    }
    for r in 0..k {
        b[s + r] = f[r];
    }
    let sol = gauss_full_pivot(&a, &b)?;
    Some((sol[..s].to_vec(), sol[s..].to_vec()))
}

fn primal_from_prices(c: &[Vec<f64>], gamma: &[f64], lambda: &[f64]) -> Option<Vec<f64>> {
    (0..gamma.len())
        .map(|j| {
            let p: f64 = (0..c.len()).map(|i| c[i][j] * lambda[i]).sum();
            (p > 0.0).then(|| gamma[j] / p)
        })
        .collect()
}

/// Gradient of the log-utility dual `D(lambda) = max_x L(x, lambda)`,
/// i.e. `f - C x(lambda)`, or `None` outside the domain.
fn dual_gradient(c: &[Vec<f64>], gamma: &[f64], f: &[f64], lambda: &[f64]) -> Option<Vec<f64>> {
    let x = primal_from_prices(c, gamma, lambda)?;
    Some(
        (0..c.len())
            .map(|i| f[i] - (0..gamma.len()).map(|j| c[i][j] * x[j]).sum::<f64>())
            .collect(),
    )
}

/// Projected gradient on the dual of `max sum g_s log x_s s.t. C x <= f`,
/// run until the projected gradient is below `tol`. The step is backtracked
/// until the local Lipschitz estimate along the step holds. Returns
/// `(x, lambda)`.
pub fn utility_dual_oracle(c: &[Vec<f64>], gamma: &[f64], f: &[f64], tol: f64) -> (Vec<f64>, Vec<f64>) {
    let k = c.len();
    let mut lambda = vec![1.0; k];
    let mut grad = dual_gradient(c, gamma, f, &lambda).expect("all-ones prices are feasible");
    let mut t = 1.0;
    for _ in 0..5_000_000 {
        let pg = (0..k)
            .map(|i| {
                if lambda[i] > 0.0 || grad[i] < 0.0 {
                    grad[i].abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        if pg < tol {
            break;
        }
        t *= 2.0;
        loop {
            let cand: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| (l - t * g).max(0.0)).collect();
            if let Some(g_new) = dual_gradient(c, gamma, f, &cand) {
                let diff: Vec<f64> = cand.iter().zip(&lambda).map(|(a, b)| a - b).collect();
                let curv: f64 = g_new.iter().zip(&grad).zip(&diff).map(|((a, b), d)| (a - b) * d).sum();
                let dd: f64 = diff.iter().map(|d| d * d).sum();
                if curv <= dd / t {
                    lambda = cand;
                    grad = g_new;
                    break;
                }
            }
            t /= 2.0;
            assert!(t > 1e-300, "line search failed");
        }
    }
    (primal_from_prices(c, gamma, &lambda).unwrap(), lambda)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Random `K x S` 0/1 matrix with no empty row or column.
pub fn random_binary(rng: &mut StdRng, k: usize, s: usize, density: f64) -> Vec<Vec<f64>> {
    loop {
        let m: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..s)
                    .map(|_| if rng.random_bool(density) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let rows_ok = m.iter().all(|r| r.iter().any(|&x| x > 0.0));
        let cols_ok = (0..s).all(|j| m.iter().any(|r| r[j] > 0.0));
        if rows_ok && cols_ok {
            return m;
        }
    }
}

/// Rank by Gaussian elimination with partial pivoting.
pub fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m = rows.to_vec();
    if m.is_empty() {
        return 0;
    }
    let cols = m[0].len();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c] / m[r][c];
                for j in c..cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Every `size`-subset of `0..n`, in lexicographic order.
pub fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

/// PAV score times `lcm(1..=max_r)`, in integers.
pub fn pav_score_int(rows: &[Vec<u8>], committee: &[usize], scale: u64) -> u64 {
    rows.iter()
        .map(|row| {
            let n = committee.iter().filter(|&&c| row[c] == 1).count() as u64;
            (1..=n).map(|j| scale / j).sum::<u64>()
        })
        .sum()
}

pub fn cc_score_int(rows: &[Vec<u8>], committee: &[usize]) -> u64 {
    rows.iter().filter(|row| committee.iter().any(|&c| row[c] == 1)).count() as u64
}

/// Best committee score of the given size over all subsets.
pub fn brute_force_best(rows: &[Vec<u8>], k: usize, size: usize, score: impl Fn(&[usize]) -> u64) -> u64 {
    let _ = rows;
    combinations(k, size).iter().map(|c| score(c)).max().unwrap_or(0)
}

/// Incidence by its matrix definition: `c_s = sign(W P_s 1)` where `W` is
/// the `K x n` mention-by-chunk matrix and `P_s = I_n(:, sigma(s))`.
pub fn incidence_by_definition(mention_chunks: &[usize], sigma: &[Vec<usize>], k: usize) -> Vec<Vec<u8>> {
    let n = mention_chunks.len();
    let w = Matrix::from_fn(k, n, |i, j| if mention_chunks[j] == i { 1.0 } else { 0.0 });
    let eye = Matrix::identity(n);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for members in sigma {
        let p_s = Matrix::from_fn(n, members.len(), |r, c| eye[(r, members[c])]);
        let ones = vec![1.0; members.len()];
        let counts = w.matmul(&p_s).matvec(&ones);
        // sign() on nonnegative counts; f64::signum maps 0.0 to 1.0, so compare
        cols.push(counts.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect());
    }
    (0..k).map(|i| cols.iter().map(|col| col[i] as u8).collect()).collect()
}

/// Random 0/1 ballots: `voters` rows over `candidates` columns.
pub fn random_ballots(rng: &mut StdRng, voters: usize, candidates: usize, density: f64) -> Vec<Vec<u8>> {
    (0..voters)
        .map(|_| (0..candidates).map(|_| rng.random_bool(density) as u8).collect())
        .collect()
}

const BASE_NAMES: &[&[&str]] = &[
    &[
        "Marie Curie",
        "MARIE  CURIE",
        "marie curie.",
        "(Marie Curie)",
        "\u{FF2D}arie Curie",
    ],
    &["Radium", "radium", "RADIUM!", "  Radium  "],
    &["Polonium", "polonium;", "\"Polonium\""],
    &["Sorbonne", "the sorbonne"],
    &["Pierre", "PIERRE", "pierre?"],
    &["Warsaw", "warsaw,"],
];

/// Random mentions over `chunks` chunks drawn from a fixed pool of name
/// spellings. Returns the mentions together with the construction-time group
/// of each mention (spellings in the same group are equivalent by design;
/// "the sorbonne" is its own group because the article is kept).
pub fn random_mentions(rng: &mut StdRng, chunks: usize, n: usize) -> (Vec<unweaver::EntityMention>, Vec<usize>) {
    let mut mentions = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.random_range(0..BASE_NAMES.len());
        let v = rng.random_range(0..BASE_NAMES[g].len());
        let name = BASE_NAMES[g][v];
        let group = if name == "the sorbonne" { BASE_NAMES.len() } else { g };
        mentions.push(unweaver::EntityMention {
            name: name.to_string(),
            description: format!("d{}", mentions.len()),
            chunk_id: rng.random_range(0..chunks),
        });
        groups.push(group);
    }
    (mentions, groups)
}

/// `sigma(s)`: mention indices of each group, groups numbered by first
/// appearance when mentions are read in chunk order.
pub fn sigma_by_construction(mentions: &[unweaver::EntityMention], groups: &[usize]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    order.sort_by_key(|&i| mentions[i].chunk_id);
    let mut seen: Vec<usize> = Vec::new();
    let mut sigma: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match seen.iter().position(|&g| g == groups[i]) {
            Some(s) => sigma[s].push(i),
            None => {
                seen.push(groups[i]);
                sigma.push(vec![i]);
            }
        }
    }
    sigma
}
