//! Ground-truth generators: sparse orthonormal eigenbases with permuted block structure,
//! colored noise at a prescribed SNR, and Gaussian sampling.
//!
//! A basis is assembled from *cells*: disjoint row subsets inside one group, each
//! carrying a few columns that form a dense random orthonormal block on those rows.
//! Columns in different cells have disjoint supports, so the whole basis is
//! orthonormal while its nonzero count is exactly the sum of `rows × cols` over cells.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::io::{load_matrix, save_matrix};
use crate::matops::{dot, Matrix};
use crate::rng::{gauss, seeded, Rng};

/// Largest DP table we are willing to build (rows × cols × nonzeros per group).
const MAX_TABLE: usize = 20_000_000;

/// Cell entries are redrawn until each magnitude reaches this fraction of `1/√rows`,
/// so every nonzero of the basis stands clear of zero.
const MIN_ENTRY_FACTOR: f64 = 0.35;
const MAX_BLOCK_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthModel {
    pub p: usize,
    pub r: usize,
    /// Row indices of each group after permutation.
    pub groups: Vec<Vec<usize>>,
    /// `permutation[i]` is the output row of block-diagonal row `i`.
    pub permutation: Vec<usize>,
    pub u_s: Matrix,
    pub d_s: Vec<f64>,
    pub sigma_s: Matrix,
    pub noise: Option<NoiseModel>,
}

/// Colored noise `w = F·ξ` with `ξ ~ N(0, I)`, so `Σ_w = F·Fᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub factor: Matrix,
    pub sigma_w: Matrix,
    pub snr_db: f64,
}

impl SynthModel {
    pub fn sigma_w(&self) -> Option<&Matrix> {
        self.noise.as_ref().map(|n| &n.sigma_w)
    }

    /// The `q` leading true eigenvectors.
    pub fn leading(&self, q: usize) -> Matrix {
        self.u_s.leading_cols(q)
    }

    /// `10·log10(tr Σ_s / tr Σ_w)`.
    pub fn observed_snr_db(&self) -> Option<f64> {
        self.sigma_w()
            .map(|w| 10.0 * (self.sigma_s.trace() / w.trace()).log10())
    }

    pub fn zero_count(&self) -> usize {
        self.u_s.data().iter().filter(|v| v.abs() < 1e-12).count()
    }
}

/// Number of nonzeros targeted for a `zero_fraction` of a p×r basis.
pub fn target_nonzeros(p: usize, r: usize, zero_fraction: f64) -> usize {
    let total = p * r;
    total - ((zero_fraction * total as f64).floor() as usize).min(total)
}

/// Draws a sparse orthonormal p×r basis with `k_groups` equal groups, permuted rows,
/// and eigenvalues in [1, 10] from [`spread_spectrum`].
///
/// The realized nonzero count is the target when achievable, otherwise within one entry.
pub fn gen_sparse_basis(p: usize, r: usize, k_groups: usize, zero_fraction: f64, seed: u64) -> Result<SynthModel> {
    if k_groups == 0 || p == 0 || p % k_groups != 0 {
        return Err(Error::Config(format!("p = {p} is not divisible into {k_groups} groups")));
    }
    if r == 0 || r > p {
        return Err(Error::Config(format!("r = {r} must lie in 1..={p}")));
    }
    if !(0.0..1.0).contains(&zero_fraction) {
        return Err(Error::Config("zero fraction must lie in [0, 1)".into()));
    }
    let g = p / k_groups;
    let target = target_nonzeros(p, r, zero_fraction);
    let mut rng = seeded(seed);

    let plan = plan_cells(g, k_groups, r, target, &mut rng)?;

    let mut block = Matrix::zeros(p, r);
    let mut col = 0;
    for (k, cells) in plan.iter().enumerate() {
        let mut rows: Vec<usize> = (k * g..(k + 1) * g).collect();
        rows.shuffle(&mut rng);
        let mut next_row = 0;
        for &(s, m) in cells {
            let cell_rows = &rows[next_row..next_row + s];
            next_row += s;
            let q = random_orthonormal(s, m, &mut rng);
            for c in 0..m {
                for (i, &row) in cell_rows.iter().enumerate() {
                    block.set(row, col + c, q.get(i, c));
                }
            }
            col += m;
        }
    }
    debug_assert_eq!(col, r);

    let mut permutation: Vec<usize> = (0..p).collect();
    permutation.shuffle(&mut rng);
    let mut col_order: Vec<usize> = (0..r).collect();
    col_order.shuffle(&mut rng);
    let mut u_s = Matrix::zeros(p, r);
    for i in 0..p {
        for (c, &src) in col_order.iter().enumerate() {
            u_s.set(permutation[i], c, block.get(i, src));
        }
    }
    let groups = (0..k_groups)
        .map(|k| {
            let mut idx: Vec<usize> = (k * g..(k + 1) * g).map(|i| permutation[i]).collect();
            idx.sort_unstable();
            idx
        })
        .collect();

    let d_s = spread_spectrum(r, &mut rng);
    let sigma_s = covariance_from(&u_s, &d_s);
    Ok(SynthModel {
        p,
        r,
        groups,
        permutation,
        u_s,
        d_s,
        sigma_s,
        noise: None,
    })
}

fn covariance_from(u: &Matrix, d: &[f64]) -> Matrix {
    let p = u.rows();
    let mut s = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v: f64 = (0..d.len()).map(|k| u.get(i, k) * d[k] * u.get(j, k)).sum();
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    s
}

/// Dense random s×m matrix with orthonormal columns (Gram-Schmidt on Gaussians).
/// Descending eigenvalues in [1, 10]: the log10 range is cut into `r` equal strata and each
/// value is drawn uniformly from the middle half of its own stratum, so neighbours differ by a
/// factor of at least `10^(0.5/r)`.
pub fn spread_spectrum(r: usize, rng: &mut Rng) -> Vec<f64> {
    (0..r)
        .map(|k| {
            let stratum = (r - 1 - k) as f64;
            10f64.powf((stratum + rng.random_range(0.25..0.75)) / r as f64)
        })
        .collect()
}

fn random_orthonormal(s: usize, m: usize, rng: &mut Rng) -> Matrix {
    let floor = MIN_ENTRY_FACTOR / (s as f64).sqrt();
    let mut best: Option<(f64, Matrix)> = None;
    for attempt in 0.. {
        let Some(q) = try_orthonormal(s, m, rng) else { continue };
        let smallest = q.data().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if smallest >= floor {
            return q;
        }
        if best.as_ref().is_none_or(|(b, _)| smallest > *b) {
            best = Some((smallest, q));
        }
        // a dense block is needed for an exact nonzero count
        if attempt >= MAX_BLOCK_ATTEMPTS {
            if let Some((b, q)) = &best {
                if *b >= 1e-8 {
                    return q.clone();
                }
            }
        }
    }
    unreachable!("the attempt loop only exits by returning")
}

fn try_orthonormal(s: usize, m: usize, rng: &mut Rng) -> Option<Matrix> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let mut v: Vec<f64> = (0..s).map(|_| gauss(rng)).collect();
        for _ in 0..2 {
            for u in &cols {
                let proj = dot(u, &v);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm < 1e-6 {
            return None;
        }
        v.iter_mut().for_each(|a| *a /= nrm);
        cols.push(v);
    }
    Some(Matrix::from_columns(&cols))
}

/// Chooses per-group cell lists `(rows, cols)` hitting `r` columns and about `target` nonzeros.
fn plan_cells(g: usize, k: usize, r: usize, target: usize, rng: &mut Rng) -> Result<Vec<Vec<(usize, usize)>>> {
    let zmax = g.min(r) * g;
    if (g + 1) * (r + 1) * (zmax + 1) > MAX_TABLE {
        return Err(Error::InfeasibleSparsity(format!("group size {g} too large for the cell planner")));
    }
    let items: Vec<(usize, usize)> = (1..=g).flat_map(|s| (1..=s.min(r)).map(move |m| (s, m))).collect();
    let idx = |u: usize, c: usize, z: usize| (u * (r + 1) + c) * (zmax + 1) + z;
    // exact[u][c][z]: some cell list uses exactly u rows, c columns, z nonzeros
    let mut exact = vec![false; (g + 1) * (r + 1) * (zmax + 1)];
    exact[idx(0, 0, 0)] = true;
    for u in 1..=g {
        for c in 0..=r {
            for z in 0..=zmax {
                exact[idx(u, c, z)] = items.iter().any(|&(s, m)| {
                    s <= u && m <= c && s * m <= z && exact[idx(u - s, c - m, z - s * m)]
                });
            }
        }
    }
    let group_ok = |c: usize, z: usize| z <= zmax && (0..=g).any(|u| exact[idx(u, c, z)]);

    // across[gi][c][z]: first gi groups reach (c, z)
    let ztot = k * zmax;
    let aidx = |gi: usize, c: usize, z: usize| (gi * (r + 1) + c) * (ztot + 1) + z;
    let mut across = vec![false; (k + 1) * (r + 1) * (ztot + 1)];
    across[aidx(0, 0, 0)] = true;
    for gi in 1..=k {
        for c in 0..=r {
            for z in 0..=ztot {
                let mut hit = false;
                'outer: for cg in 0..=c {
                    for zg in 0..=z.min(zmax) {
                        if across[aidx(gi - 1, c - cg, z - zg)] && group_ok(cg, zg) {
                            hit = true;
                            break 'outer;
                        }
                    }
                }
                across[aidx(gi, c, z)] = hit;
            }
        }
    }

    let candidates: Vec<usize> = if target <= ztot && across[aidx(k, r, target)] {
        vec![target]
    } else {
        [target.wrapping_sub(1), target + 1]
            .into_iter()
            .filter(|&z| z <= ztot && across[aidx(k, r, z)])
            .collect()
    };
    let Some(&total_z) = candidates.get(rng.random_range(0..candidates.len().max(1))) else {
        return Err(Error::InfeasibleSparsity(format!(
            "{target} nonzeros in a {}x{r} basis with {k} groups of {g}",
            k * g
        )));
    };

    let mut plan = vec![Vec::new(); k];
    let (mut c, mut z) = (r, total_z);
    for gi in (1..=k).rev() {
        let mut options = Vec::new();
        for cg in 0..=c {
            for zg in 0..=z.min(zmax) {
                if across[aidx(gi - 1, c - cg, z - zg)] && group_ok(cg, zg) {
                    options.push((cg, zg));
                }
            }
        }
        let (cg, zg) = options[rng.random_range(0..options.len())];
        let us: Vec<usize> = (0..=g).filter(|&u| exact[idx(u, cg, zg)]).collect();
        let mut u = us[rng.random_range(0..us.len())];
        let (mut cc, mut zz) = (cg, zg);
        let mut cells = Vec::new();
        while u > 0 {
            let choices: Vec<(usize, usize)> = items
                .iter()
                .copied()
                .filter(|&(s, m)| s <= u && m <= cc && s * m <= zz && exact[idx(u - s, cc - m, zz - s * m)])
                .collect();
            let (s, m) = choices[rng.random_range(0..choices.len())];
            cells.push((s, m));
            u -= s;
            cc -= m;
            zz -= s * m;
        }
        plan[gi - 1] = cells;
        c -= cg;
        z -= zg;
    }
    Ok(plan)
}

/// Adds colored noise `Σ_w = α²·MMᵀ` with `M` i.i.d. standard Gaussian p×p, scaled so the
/// observation SNR equals `snr_db`.
pub fn gen_colored_noise(model: &SynthModel, snr_db: f64, seed: u64) -> Result<SynthModel> {
    if !snr_db.is_finite() {
        return Err(Error::Config("snr must be finite".into()));
    }
    let p = model.p;
    let mut rng = seeded(seed);
    let m = Matrix::from_fn(p, p, |_, _| gauss(&mut rng));
    let raw = m.gram_rows();
    let alpha2 = model.sigma_s.trace() / (raw.trace() * 10f64.powf(snr_db / 10.0));
    let mut out = model.clone();
    out.noise = Some(NoiseModel {
        factor: m.scale(alpha2.sqrt()),
        sigma_w: raw.scale(alpha2),
        snr_db,
    });
    Ok(out)
}

/// Draws `n` signal columns `s_t = U_s·π_t`, `π_t ~ N(0, D_s)`, and observations
/// `x_t = s_t + w_t` (or `x = s` when `noisy` is off).
pub fn sample_gaussian(model: &SynthModel, n: usize, seed: u64, noisy: bool) -> Result<(Matrix, Matrix)> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if noisy && model.noise.is_none() {
        return Err(Error::MissingNoiseModel);
    }
    let mut rng = seeded(seed);
    let sd: Vec<f64> = model.d_s.iter().map(|d| d.sqrt()).collect();
    let pi = Matrix::from_fn(model.r, n, |k, _| sd[k] * gauss(&mut rng));
    let s = model.u_s.matmul(&pi)?;
    if !noisy {
        return Ok((s.clone(), s));
    }
    let noise = model.noise.as_ref().expect("checked above");
    let xi = Matrix::from_fn(model.p, n, |_, _| gauss(&mut rng));
    let x = s.add(&noise.factor.matmul(&xi)?)?;
    Ok((s, x))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    p: usize,
    r: usize,
    groups: Vec<Vec<usize>>,
    permutation: Vec<usize>,
    d_s: Vec<f64>,
    snr_db: Option<f64>,
}

/// Writes `<stem>.json` (manifest), `<stem>.us.matx` and, with noise, `<stem>.noise.matx`.
pub fn save_synth(dir: &Path, stem: &str, model: &SynthModel) -> Result<()> {
    let manifest = Manifest {
        p: model.p,
        r: model.r,
        groups: model.groups.clone(),
        permutation: model.permutation.clone(),
        d_s: model.d_s.clone(),
        snr_db: model.noise.as_ref().map(|n| n.snr_db),
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
    save_matrix(&dir.join(format!("{stem}.us.matx")), &model.u_s)?;
    if let Some(noise) = &model.noise {
        save_matrix(&dir.join(format!("{stem}.noise.matx")), &noise.factor)?;
    }
    Ok(())
}

pub fn load_synth(dir: &Path, stem: &str) -> Result<SynthModel> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let u_s = load_matrix(&dir.join(format!("{stem}.us.matx")))?;
    if u_s.shape() != (manifest.p, manifest.r) || manifest.d_s.len() != manifest.r {
        return Err(Error::Format("synth manifest disagrees with stored basis".into()));
    }
    let sigma_s = covariance_from(&u_s, &manifest.d_s);
    let noise = match manifest.snr_db {
        Some(snr_db) => {
            let factor = load_matrix(&dir.join(format!("{stem}.noise.matx")))?;
            let sigma_w = factor.gram_rows();
            Some(NoiseModel { factor, sigma_w, snr_db })
        }
        None => None,
    };
    Ok(SynthModel {
        p: manifest.p,
        r: manifest.r,
        groups: manifest.groups,
        permutation: manifest.permutation,
        u_s,
        d_s: manifest.d_s,
        sigma_s,
        noise,
    })
}
