//! Plain-text field files, CSV tables and the binary kernel cache.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::model::ModelParams;
use crate::riesz::RieszKernel;

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Metadata carried in the header of a field file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldHeader {
    pub n: usize,
    pub lambda: f64,
    pub m: usize,
    pub r_max: f64,
}

impl FieldHeader {
    pub fn of(grid: &RadialGrid, lambda: f64) -> Self {
        FieldHeader { n: grid.dim(), lambda, m: grid.len(), r_max: grid.r_max() }
    }
}

pub fn write_field(path: &Path, header: &FieldHeader, r: &Array1<f64>, u: &RadialField) -> Result<()> {
    if r.len() != u.len() || r.len() != header.m {
        return Err(Error::Usage(format!(
            "field of length {} does not match {} nodes (header M = {})",
            u.len(),
            r.len(),
            header.m
        )));
    }
    let mut s = String::new();
    writeln!(
        s,
        "# N={} lambda={} M={} r_max={}",
        header.n,
        fmt17(header.lambda),
        header.m,
        fmt17(header.r_max)
    )
    .unwrap();
    s.push_str("r,re,im\n");
    for i in 0..r.len() {
        writeln!(s, "{},{},{}", fmt17(r[i]), fmt17(u.re[i]), fmt17(u.im[i])).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, Array1<f64>, RadialField)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
    let head = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let head = head.strip_prefix('#').ok_or_else(|| bad("missing header line".into()))?;
    let mut n = None;
    let mut lambda = None;
    let mut m = None;
    let mut r_max = None;
    for tok in head.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("bad header token {tok}")))?;
        let num = || v.parse::<f64>().map_err(|_| bad(format!("bad value for {k}: {v}")));
        match k {
            "N" => n = Some(num()? as usize),
            "lambda" => lambda = Some(num()?),
            "M" => m = Some(num()? as usize),
            "r_max" => r_max = Some(num()?),
            _ => {}
        }
    }
    let header = FieldHeader {
        n: n.ok_or_else(|| bad("header lacks N".into()))?,
        lambda: lambda.ok_or_else(|| bad("header lacks lambda".into()))?,
        m: m.ok_or_else(|| bad("header lacks M".into()))?,
        r_max: r_max.ok_or_else(|| bad("header lacks r_max".into()))?,
    };
    if lines.next().map(str::trim) != Some("r,re,im") {
        return Err(bad("expected column line r,re,im".into()));
    }
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != 3 {
            return Err(bad(format!("row {} has {} cells", i + 1, vals.len())));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v.trim().parse::<f64>().map_err(|_| bad(format!("row {}: bad number {v}", i + 1)))?);
        }
    }
    if cols[0].len() != header.m {
        return Err(bad(format!("{} rows but header says M = {}", cols[0].len(), header.m)));
    }
    let [r, re, im] = cols;
    Ok((header, Array1::from(r), RadialField { re: Array1::from(re), im: Array1::from(im) }))
}

/// A CSV table whose cells may be empty.
pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<Option<f64>>]) -> Result<()> {
    let mut s = columns.join(",");
    s.push('\n');
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::Usage(format!("row has {} cells, table has {} columns", row.len(), columns.len())));
        }
        let cells: Vec<String> = row.iter().map(|c| c.map(fmt17).unwrap_or_default()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut lines = f.lines();
    let head = lines.next().ok_or_else(|| Error::Format(format!("{}: empty table", path.display())))??;
    let cols: Vec<String> = head.split(',').map(|c| c.trim().to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                let c = c.trim();
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|_| Error::Format(format!("bad number {c}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((cols, rows))
}

const MAGIC: &str = "hartree-kernel v1";

/// Everything the assembled kernel matrix depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelKey {
    pub n: usize,
    pub lambda: f64,
    pub m: usize,
    pub r_max: f64,
    pub layout: String,
    pub degree: usize,
    pub scale: f64,
    pub strategy: String,
}

impl KernelKey {
    pub fn new(grid: &RadialGrid, params: &ModelParams, strategy: &str) -> Self {
        let spec = grid.spec();
        KernelKey {
            n: params.n,
            lambda: params.lambda,
            m: grid.len(),
            r_max: grid.r_max(),
            layout: spec.layout.clone(),
            degree: grid.degree(),
            scale: spec.scale,
            strategy: strategy.to_string(),
        }
    }

    /// Canonical text form; floats by their bit patterns.
    pub fn canonical(&self) -> String {
        format!(
            "N={} lambda={:016x} M={} r_max={:016x} layout={} degree={} scale={:016x} strategy={}",
            self.n,
            self.lambda.to_bits(),
            self.m,
            self.r_max.to_bits(),
            self.layout,
            self.degree,
            self.scale.to_bits(),
            self.strategy
        )
    }

    pub fn file_name(&self) -> String {
        let h = Sha256::digest(self.canonical().as_bytes());
        format!("kernel-{}.bin", hex(&h[..8]))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn matrix_bytes(a: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.len() * 8);
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Write `kernel` under `dir`: text header (magic, key, checksum) then raw little-endian rows.
pub fn save_kernel(dir: &Path, key: &KernelKey, kernel: &RieszKernel) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let data = matrix_bytes(&kernel.matrix);
    let sum = hex(&Sha256::digest(&data));
    let path = dir.join(key.file_name());
    let tmp = dir.join(format!("{}.tmp", key.file_name()));
    {
        let mut f = fs::File::create(&tmp)?;
        writeln!(f, "{MAGIC}")?;
        writeln!(f, "{}", key.canonical())?;
        writeln!(f, "rows={} sha256={sum}", kernel.len())?;
        f.write_all(&data)?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Read a cached kernel; `Ok(None)` when no file exists for the key.
pub fn load_kernel(dir: &Path, key: &KernelKey) -> Result<Option<RieszKernel>> {
    let path = dir.join(key.file_name());
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let bad = |m: &str| Error::Format(format!("kernel cache {}: {m}", path.display()));
    let mut pos = 0;
    let mut line = || -> Result<String> {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        let s = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not text"))?.to_string();
        pos += end + 1;
        Ok(s)
    };
    if line()? != MAGIC {
        return Err(bad("wrong magic line"));
    }
    if line()? != key.canonical() {
        return Err(bad("key mismatch (hash collision or stale file)"));
    }
    let info = line()?;
    let (rows, sum) = info
        .strip_prefix("rows=")
        .and_then(|s| s.split_once(" sha256="))
        .ok_or_else(|| bad("malformed size line"))?;
    let rows: usize = rows.parse().map_err(|_| bad("malformed row count"))?;
    let data = &bytes[pos..];
    if rows != key.m || data.len() != rows * rows * 8 {
        return Err(bad("payload size does not match the key"));
    }
    if hex(&Sha256::digest(data)) != sum {
        return Err(bad("checksum mismatch"));
    }
    let vals: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let matrix = Array2::from_shape_vec((rows, rows), vals).map_err(|e| bad(&e.to_string()))?;
    Ok(Some(RieszKernel { lambda: key.lambda, strategy: key.strategy.clone(), matrix }))
}

/// Cached kernel if present, otherwise assemble and store it.
pub fn kernel_cached(dir: Option<&Path>, grid: &RadialGrid, params: &ModelParams, strategy: &str) -> Result<RieszKernel> {
    let Some(dir) = dir else {
        return RieszKernel::assemble(grid, params, strategy);
    };
    let key = KernelKey::new(grid, params, strategy);
    if let Some(k) = load_kernel(dir, &key)? {
        return Ok(k);
    }
    let k = RieszKernel::assemble(grid, params, strategy)?;
    save_kernel(dir, &key, &k)?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn fmt17_round_trips() {
        for v in [1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(6).with_m(64)).unwrap();
        let u = RadialField { re: grid.sample(|r| (1.0 + r).recip()), im: grid.sample(|r| (-r).exp()) };
        let h = FieldHeader::of(&grid, 4.0);
        let p = dir.path().join("u.csv");
        write_field(&p, &h, grid.nodes(), &u).unwrap();
        let (h2, r2, u2) = read_field(&p).unwrap();
        assert_eq!(h, h2);
        assert_eq!(&r2, grid.nodes());
        assert_eq!(u.re, u2.re);
        assert_eq!(u.im, u2.im);
    }

    #[test]
    fn table_keeps_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![vec![Some(0.0), None], vec![Some(0.5), Some(-1.0 / 7.0)]];
        write_table(&p, &["t", "x"], &rows).unwrap();
        let (c, r) = read_table(&p).unwrap();
        assert_eq!(c, vec!["t", "x"]);
        assert_eq!(r, rows);
    }

    #[test]
    fn kernel_cache_is_bit_exact_and_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let params = ModelParams::new(6, 4.0).unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(6).with_m(64)).unwrap();
        let k = kernel_cached(Some(dir.path()), &grid, &params, "spectral").unwrap();
        let key = KernelKey::new(&grid, &params, "spectral");
        let back = load_kernel(dir.path(), &key).unwrap().unwrap();
        assert!(k.matrix.iter().zip(back.matrix.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let other = KernelKey { lambda: 3.0, ..key.clone() };
        assert!(load_kernel(dir.path(), &other).unwrap().is_none());

        let path = dir.path().join(key.file_name());
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_kernel(dir.path(), &key), Err(Error::Format(_))));
    }
}
