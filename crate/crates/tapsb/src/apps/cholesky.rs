//! Tiled Cholesky factorization: generate a positive-definite matrix,
//! factor it through a task DAG of POTRF/TRSM/SYRK/GEMM kernels, validate
//! L·Lᵀ against the input.
//!
//! Kernels are plain triple loops on value inputs; the claim under test is
//! executor behavior, not kernel throughput, and self-contained kernels
//! keep results bit-identical across every executor.

use super::{App, AppError, AppSummary, RunContext};
use crate::engine::{TaskInput, TaskSpawner};
use crate::registry::{arg, TaskRegistry};
use crate::rng::SeededRng;
use crate::task::TaskError;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Dense row-major matrix block. Edge tiles of a blocked matrix may be
/// rectangular ("ragged"); kernels operate on actual dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tile {
    pub fn zeros(rows: usize, cols: usize) -> Tile {
        Tile {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transposed(&self) -> Tile {
        let mut out = Tile::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.at(r, c));
            }
        }
        out
    }

    pub fn to_value(&self) -> Value {
        Value::List(vec![
            Value::Int(self.rows as i64),
            Value::Int(self.cols as i64),
            Value::F64Array(self.data.clone()),
        ])
    }

    pub fn from_value(value: &Value) -> Result<Tile, TaskError> {
        let bad = || TaskError::Application("malformed tile value".to_owned());
        let items = value.as_list().ok_or_else(bad)?;
        let rows = items.first().and_then(Value::as_int).ok_or_else(bad)? as usize;
        let cols = items.get(1).and_then(Value::as_int).ok_or_else(bad)? as usize;
        let data = items
            .get(2)
            .and_then(Value::as_f64_array)
            .ok_or_else(bad)?
            .to_vec();
        if data.len() != rows * cols {
            return Err(bad());
        }
        Ok(Tile { rows, cols, data })
    }
}

/// Square matrix stored as a grid of square tiles (ragged at the edge when
/// the tile size does not divide the matrix side).
#[derive(Debug, Clone, PartialEq)]
pub struct TileMatrix {
    pub n: usize,
    pub b: usize,
    pub tiles: Vec<Vec<Tile>>,
}

impl TileMatrix {
    pub fn tile_count(&self) -> usize {
        self.n.div_ceil(self.b)
    }

    fn tile_side(&self, index: usize) -> usize {
        let start = index * self.b;
        (self.n - start).min(self.b)
    }

    pub fn from_dense(n: usize, b: usize, dense: &[f64]) -> TileMatrix {
        assert_eq!(dense.len(), n * n);
        let t = n.div_ceil(b);
        let mut tiles = Vec::with_capacity(t);
        for i in 0..t {
            let rows = (n - i * b).min(b);
            let mut row_tiles = Vec::with_capacity(t);
            for j in 0..t {
                let cols = (n - j * b).min(b);
                let mut tile = Tile::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        tile.set(r, c, dense[(i * b + r) * n + (j * b + c)]);
                    }
                }
                row_tiles.push(tile);
            }
            tiles.push(row_tiles);
        }
        TileMatrix { n, b, tiles }
    }

    /// Reassembles the logical dense matrix, row-major.
    pub fn assemble(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for (i, row_tiles) in self.tiles.iter().enumerate() {
            for (j, tile) in row_tiles.iter().enumerate() {
                for r in 0..tile.rows {
                    for c in 0..tile.cols {
                        dense[(i * self.b + r) * self.n + (j * self.b + c)] = tile.at(r, c);
                    }
                }
            }
        }
        dense
    }
}

/// Generates the symmetric positive definite input: `B` has i.i.d. entries
/// uniform in `[0, 1)` drawn row-major from the seeded generator, and
/// `A = (B + Bᵀ) + n·I`.
pub fn generate_input(n: usize, b: usize, seed: u64) -> TileMatrix {
    assert!(n >= 1);
    let mut rng = SeededRng::derive(seed, "cholesky-input");
    let mut base = vec![0.0f64; n * n];
    for entry in base.iter_mut() {
        *entry = rng.uniform_f64();
    }
    let mut dense = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            dense[i * n + j] = base[i * n + j] + base[j * n + i];
        }
        dense[i * n + i] += n as f64;
    }
    TileMatrix::from_dense(n, b, &dense)
}

/// Untiled Cholesky of one symmetric positive-definite tile
/// (Cholesky–Banachiewicz, row by row). Returns lower-triangular `L` with
/// `L·Lᵀ = tile`, zero strict upper triangle, positive diagonal.
pub fn potrf(tile: &Tile) -> Result<Tile, TaskError> {
    if tile.rows != tile.cols {
        return Err(TaskError::Application(
            "potrf needs a square tile".to_owned(),
        ));
    }
    let n = tile.rows;
    let mut l = Tile::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = tile.at(i, j);
            for k in 0..j {
                sum -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(TaskError::Application(format!(
                        "non-positive pivot {sum:.3e} at row {i}; tile is not positive definite"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.at(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `X·l_kkᵀ = a_ik` for `X` by forward substitution, column by
/// column (the columns of `X` depend only on earlier ones).
pub fn trsm(l_kk: &Tile, a_ik: &Tile) -> Result<Tile, TaskError> {
    if l_kk.rows != l_kk.cols || a_ik.cols != l_kk.rows {
        return Err(TaskError::Application("trsm dimension mismatch".to_owned()));
    }
    let mut x = Tile::zeros(a_ik.rows, a_ik.cols);
    for c in 0..a_ik.cols {
        let pivot = l_kk.at(c, c);
        if pivot == 0.0 {
            return Err(TaskError::Application(format!(
                "zero diagonal at {c} in triangular solve"
            )));
        }
        for r in 0..a_ik.rows {
            let mut sum = a_ik.at(r, c);
            for k in 0..c {
                sum -= x.at(r, k) * l_kk.at(c, k);
            }
            x.set(r, c, sum / pivot);
        }
    }
    Ok(x)
}

/// Symmetric rank-k update: `a_ii − l_ik·l_ikᵀ`.
pub fn syrk(a_ii: &Tile, l_ik: &Tile) -> Result<Tile, TaskError> {
    if a_ii.rows != a_ii.cols || l_ik.rows != a_ii.rows {
        return Err(TaskError::Application("syrk dimension mismatch".to_owned()));
    }
    let mut out = a_ii.clone();
    for i in 0..out.rows {
        for j in 0..out.cols {
            let mut sum = 0.0;
            for k in 0..l_ik.cols {
                sum += l_ik.at(i, k) * l_ik.at(j, k);
            }
            out.data[i * out.cols + j] -= sum;
        }
    }
    Ok(out)
}

/// General update: `c_ij − l_ik·l_jkᵀ`.
pub fn gemm(c_ij: &Tile, l_ik: &Tile, l_jk: &Tile) -> Result<Tile, TaskError> {
    if l_ik.rows != c_ij.rows || l_jk.rows != c_ij.cols || l_ik.cols != l_jk.cols {
        return Err(TaskError::Application("gemm dimension mismatch".to_owned()));
    }
    let mut out = c_ij.clone();
    for i in 0..out.rows {
        for j in 0..out.cols {
            let mut sum = 0.0;
            for k in 0..l_ik.cols {
                sum += l_ik.at(i, k) * l_jk.at(j, k);
            }
            out.data[i * out.cols + j] -= sum;
        }
    }
    Ok(out)
}

pub const POTRF_TASK: &str = "cholesky_potrf";
pub const TRSM_TASK: &str = "cholesky_trsm";
pub const SYRK_TASK: &str = "cholesky_syrk";
pub const GEMM_TASK: &str = "cholesky_gemm";

pub(crate) fn register_tasks(registry: &mut TaskRegistry) {
    registry.register(POTRF_TASK, |args| {
        let tile = Tile::from_value(arg(args, 0)?)?;
        Ok(potrf(&tile)?.to_value())
    });
    registry.register(TRSM_TASK, |args| {
        let l_kk = Tile::from_value(arg(args, 0)?)?;
        let a_ik = Tile::from_value(arg(args, 1)?)?;
        Ok(trsm(&l_kk, &a_ik)?.to_value())
    });
    registry.register(SYRK_TASK, |args| {
        let a_ii = Tile::from_value(arg(args, 0)?)?;
        let l_ik = Tile::from_value(arg(args, 1)?)?;
        Ok(syrk(&a_ii, &l_ik)?.to_value())
    });
    registry.register(GEMM_TASK, |args| {
        let c_ij = Tile::from_value(arg(args, 0)?)?;
        let l_ik = Tile::from_value(arg(args, 1)?)?;
        let l_jk = Tile::from_value(arg(args, 2)?)?;
        Ok(gemm(&c_ij, &l_ik, &l_jk)?.to_value())
    });
}

/// Task count of the right-looking factorization over `t` tile rows:
/// `t` POTRF + `t(t−1)/2` TRSM + `t(t−1)/2` SYRK + `t(t−1)(t−2)/6` GEMM.
pub fn expected_task_count(t: usize) -> u64 {
    let t = t as u64;
    t + t * t.saturating_sub(1) + t * t.saturating_sub(1) * t.saturating_sub(2) / 6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyConfig {
    /// Matrix side length.
    pub n: usize,
    /// Tile side length.
    pub block: usize,
    pub seed: u64,
}

impl CholeskyConfig {
    pub fn tile_count(&self) -> usize {
        self.n.div_ceil(self.block.max(1))
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.n < 1 || self.block < 1 || self.block > self.n {
            return Err(AppError::InvalidConfig(format!(
                "cholesky needs 1 <= block <= n (got n={}, block={})",
                self.n, self.block
            )));
        }
        Ok(())
    }
}

/// Submits the right-looking tiled factorization of a generated input and
/// returns the assembled lower-triangular factor.
pub fn run_cholesky(
    spawner: &dyn TaskSpawner,
    config: &CholeskyConfig,
) -> Result<TileMatrix, AppError> {
    config.validate()?;
    let a = generate_input(config.n, config.block, config.seed);
    let t = a.tile_count();

    // Working cells of the lower triangle, progressively replaced by
    // futures as updates are submitted.
    let mut cells: Vec<Vec<Option<TaskInput>>> = (0..t)
        .map(|i| {
            (0..=i)
                .map(|j| Some(TaskInput::Value(a.tiles[i][j].to_value())))
                .collect()
        })
        .collect();
    let mut factor_futures: Vec<Vec<Option<crate::engine::TaskFuture>>> =
        (0..t).map(|i| vec![None; i + 1]).collect();

    for k in 0..t {
        let diag = cells[k][k].take().expect("diagonal cell available");
        let potrf_future = spawner.submit(POTRF_TASK, vec![diag])?;
        factor_futures[k][k] = Some(potrf_future.clone());

        let mut trsm_futures = Vec::with_capacity(t - k - 1);
        for i in k + 1..t {
            let a_ik = cells[i][k].take().expect("panel cell available");
            let trsm_future =
                spawner.submit(TRSM_TASK, vec![TaskInput::future(&potrf_future), a_ik])?;
            factor_futures[i][k] = Some(trsm_future.clone());
            trsm_futures.push(trsm_future);
        }
        for i in k + 1..t {
            let l_ik = &trsm_futures[i - k - 1];
            let a_ii = cells[i][i].take().expect("diagonal cell available");
            cells[i][i] = Some(TaskInput::Future(
                spawner.submit(SYRK_TASK, vec![a_ii, TaskInput::future(l_ik)])?,
            ));
            for j in k + 1..i {
                let l_jk = &trsm_futures[j - k - 1];
                let c_ij = cells[i][j].take().expect("interior cell available");
                cells[i][j] = Some(TaskInput::Future(spawner.submit(
                    GEMM_TASK,
                    vec![c_ij, TaskInput::future(l_ik), TaskInput::future(l_jk)],
                )?));
            }
        }
    }

    // Collect the factor; the first task failure aborts the run.
    let mut l = TileMatrix {
        n: a.n,
        b: a.b,
        tiles: (0..t)
            .map(|i| {
                (0..t)
                    .map(|j| Tile::zeros(a.tile_side(i), a.tile_side(j)))
                    .collect()
            })
            .collect(),
    };
    #[allow(clippy::needless_range_loop)] // triangular indexing reads clearer
    for i in 0..t {
        for j in 0..=i {
            let future = factor_futures[i][j].take().expect("factor tile submitted");
            let value = future.result(None).map_err(AppError::Wait)?;
            l.tiles[i][j] = Tile::from_value(&value).map_err(|e| AppError::Other(e.to_string()))?;
        }
    }
    Ok(l)
}

/// Relative Frobenius reconstruction error `‖L·Lᵀ − A‖_F / ‖A‖_F` on the
/// assembled matrices.
pub fn reconstruction_error(l: &TileMatrix, a: &TileMatrix) -> f64 {
    let n = a.n;
    let dense_l = l.assemble();
    let dense_a = a.assemble();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut reconstructed = 0.0;
            for k in 0..=i.min(j) {
                reconstructed += dense_l[i * n + k] * dense_l[j * n + k];
            }
            let diff = reconstructed - dense_a[i * n + j];
            num += diff * diff;
            den += dense_a[i * n + j] * dense_a[i * n + j];
        }
    }
    (num / den).sqrt()
}

/// SHA-256 of the assembled factor's little-endian bytes; identical factors
/// hash identically across executors and runs.
pub fn factor_hash(l: &TileMatrix) -> String {
    let mut hasher = Sha256::new();
    for x in l.assemble() {
        hasher.update(x.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct CholeskyApp {
    config: CholeskyConfig,
}

impl CholeskyApp {
    pub fn new(config: CholeskyConfig) -> CholeskyApp {
        CholeskyApp { config }
    }
}

impl App for CholeskyApp {
    fn run(
        &mut self,
        spawner: &dyn TaskSpawner,
        ctx: &mut RunContext,
    ) -> Result<AppSummary, AppError> {
        ctx.log(format!(
            "cholesky n={} block={} seed={} tiles={}",
            self.config.n,
            self.config.block,
            self.config.seed,
            self.config.tile_count()
        ));
        let started = std::time::Instant::now();
        let l = run_cholesky(spawner, &self.config)?;
        let a = generate_input(self.config.n, self.config.block, self.config.seed);
        let error = reconstruction_error(&l, &a);
        let hash = factor_hash(&l);
        ctx.log(format!("cholesky done error={error:.3e} hash={hash}"));
        let mut summary = AppSummary::new();
        summary.insert("n".into(), self.config.n.into());
        summary.insert("block".into(), self.config.block.into());
        summary.insert("seed".into(), self.config.seed.into());
        summary.insert(
            "task_count".into(),
            expected_task_count(self.config.tile_count()).into(),
        );
        summary.insert("reconstruction_error".into(), error.into());
        summary.insert("l_hash".into(), hash.into());
        summary.insert(
            "factor_seconds".into(),
            started.elapsed().as_secs_f64().into(),
        );
        Ok(summary)
    }
}
