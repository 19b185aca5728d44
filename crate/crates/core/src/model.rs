//! On-disk model format.
//!
//! A plain-text header (one `key value` pair per line), the item ID table
//! (one ID per line), then a binary little-endian payload:
//!
//! ```text
//! gmrf-model 1
//! m <items>
//! nnz <stored weights>
//! solver dense | dense-mean-constrained | sparse
//! lambda <f64>
//! alpha <f64>
//! center true | false
//! r <f64> | -
//! target_density <f64> | -
//! cap <usize> | -
//! n_train_users <usize>
//! filters <min_user_items> <min_item_users>
//! split <val_frac> <test_frac> <fold_in_frac> <seed> | -
//! items
//! <item id>            (m lines)
//! payload gmrf-weights 1
//! mu[m] std[m] s[m]    (f64 LE)
//! nnz x (row u32, col u32, value f64)   (LE, column-major order)
//! ```
//!
//! Triplet rows and columns index the item table, so every weight is tied to
//! an external item ID. The zero diagonal is never stored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::PreprocessStats;
use crate::weights::{SolverKind, SparseColumns, WeightMatrix};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "gmrf-model";
const PAYLOAD_MAGIC: &str = "payload gmrf-weights";

/// Split parameters recorded at training time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub val_frac: f64,
    pub test_frac: f64,
    pub fold_in_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeader {
    pub version: u32,
    pub m: usize,
    pub nnz: usize,
    pub solver: SolverKind,
    pub lambda: f64,
    pub alpha: f64,
    pub center: bool,
    pub r: Option<f64>,
    pub target_density: Option<f64>,
    pub cap: Option<usize>,
    pub n_train_users: usize,
    /// Activity filters applied to the data before splitting.
    pub min_user_items: usize,
    pub min_item_users: usize,
    pub split: Option<SplitParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub items: Vec<String>,
    pub stats: PreprocessStats,
    pub weights: WeightMatrix,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_owned(), T::to_string)
}

impl ModelHeader {
    pub fn to_text(&self) -> String {
        let split = self.split.map_or_else(
            || "-".to_owned(),
            |s| format!("{} {} {} {}", s.val_frac, s.test_frac, s.fold_in_frac, s.seed),
        );
        format!(
            "{MAGIC} {}\nm {}\nnnz {}\nsolver {}\nlambda {}\nalpha {}\ncenter {}\nr {}\n\
             target_density {}\ncap {}\nn_train_users {}\nfilters {} {}\nsplit {}\n",
            self.version,
            self.m,
            self.nnz,
            self.solver,
            self.lambda,
            self.alpha,
            self.center,
            opt(&self.r),
            opt(&self.target_density),
            opt(&self.cap),
            self.n_train_users,
            self.min_user_items,
            self.min_item_users,
            split
        )
    }
}

impl ModelFile {
    pub fn new(
        header: ModelHeader,
        items: Vec<String>,
        stats: PreprocessStats,
        weights: WeightMatrix,
    ) -> Result<Self> {
        let m = items.len();
        if header.m != m || stats.len() != m || weights.dim() != m {
            return Err(Error::ModelFormat(format!(
                "inconsistent sizes: header m = {}, {} item ids, {} stats, {} weight rows",
                header.m,
                m,
                stats.len(),
                weights.dim()
            )));
        }
        let mut header = header;
        header.nnz = weights.nnz();
        Ok(ModelFile {
            header,
            items,
            stats,
            weights,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<model output>", e);
        w.write_all(self.header.to_text().as_bytes()).map_err(io)?;
        w.write_all(b"items\n").map_err(io)?;
        for id in &self.items {
            if id.is_empty() || id.contains(['\n', '\r']) {
                return Err(Error::ModelFormat(format!(
                    "item id {id:?} cannot be stored (empty or contains a line break)"
                )));
            }
            w.write_all(id.as_bytes()).map_err(io)?;
            w.write_all(b"\n").map_err(io)?;
        }
        writeln!(w, "{PAYLOAD_MAGIC} {FORMAT_VERSION}").map_err(io)?;
        for v in self.stats.mu.iter().chain(&self.stats.std).chain(&self.stats.s) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        let trip = self.weights.triplets();
        if trip.len() != self.header.nnz {
            return Err(Error::ModelFormat("header nnz out of date".into()));
        }
        for (j, i, v) in trip {
            let j = u32::try_from(j).map_err(|_| Error::ModelFormat("too many items".into()))?;
            let i = u32::try_from(i).map_err(|_| Error::ModelFormat("too many items".into()))?;
            w.write_all(&j.to_le_bytes()).map_err(io)?;
            w.write_all(&i.to_le_bytes()).map_err(io)?;
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    /// Reads only the text header.
    pub fn load_header(path: impl AsRef<Path>) -> Result<ModelHeader> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_header(&mut BufReader::new(file))
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let header = read_header(r)?;
        let m = header.m;
        let tag = read_line(r)?;
        if tag != "items" {
            return Err(Error::ModelFormat(format!("expected 'items', found {tag:?}")));
        }
        let mut items = Vec::with_capacity(m);
        for _ in 0..m {
            items.push(read_line(r)?);
        }
        let payload = read_line(r)?;
        if payload != format!("{PAYLOAD_MAGIC} {FORMAT_VERSION}") {
            return Err(Error::ModelFormat(format!("unsupported payload tag {payload:?}")));
        }
        let mut f64s = |n: usize| -> Result<Vec<f64>> {
            (0..n).map(|_| Ok(f64::from_le_bytes(read_array(r)?))).collect()
        };
        let mu = f64s(m)?;
        let std = f64s(m)?;
        let s = f64s(m)?;
        let mut trip = Vec::with_capacity(header.nnz);
        for _ in 0..header.nnz {
            let j = u32::from_le_bytes(read_array(r)?) as usize;
            let i = u32::from_le_bytes(read_array(r)?) as usize;
            let v = f64::from_le_bytes(read_array(r)?);
            trip.push((j, i, v));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io("<model input>", e))? != 0 {
            return Err(Error::ModelFormat("trailing bytes after payload".into()));
        }

        let cols = SparseColumns::from_triplets(m, trip.clone())?;
        let mut weights = match header.solver {
            SolverKind::Sparse => WeightMatrix::sparse(m, cols, header.solver, header.lambda),
            kind => {
                let dense = WeightMatrix::sparse(m, cols, kind, header.lambda).to_dense();
                WeightMatrix::dense(dense, kind, header.lambda)?
            }
        };
        if weights.nnz() != header.nnz {
            return Err(Error::ModelFormat("payload contains explicit zeros".into()));
        }
        weights.alpha = Some(header.alpha);
        weights.r = header.r;
        weights.target_density = header.target_density;
        let stats = PreprocessStats {
            mu,
            std,
            alpha: header.alpha,
            s,
        };
        ModelFile::new(header, items, stats, weights)
    }
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let n = r
        .read_line(&mut line)
        .map_err(|e| Error::io("<model input>", e))?;
    if n == 0 {
        return Err(Error::ModelFormat("unexpected end of file".into()));
    }
    if line.ends_with('\n') {
        line.pop();
    }
    Ok(line)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::ModelFormat("truncated payload".into()))?;
    Ok(buf)
}

fn read_header<R: BufRead>(r: &mut R) -> Result<ModelHeader> {
    let first = read_line(r)?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::ModelFormat(format!("not a model file (first line {first:?})")))?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported format version {version}")));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = read_line(r)?;
        match line.split_once(' ') {
            Some((k, v)) if k == name => Ok(v.to_owned()),
            _ => Err(Error::ModelFormat(format!("expected '{name}', found {line:?}"))),
        }
    };
    fn num<T: std::str::FromStr>(name: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::ModelFormat(format!("bad value {v:?} for {name}")))
    }
    fn opt_num<T: std::str::FromStr>(name: &str, v: &str) -> Result<Option<T>> {
        if v == "-" {
            Ok(None)
        } else {
            num(name, v).map(Some)
        }
    }
    let m = num("m", &field("m")?)?;
    let nnz = num("nnz", &field("nnz")?)?;
    let solver: SolverKind = field("solver")?
        .parse()
        .map_err(|e: Error| Error::ModelFormat(e.to_string()))?;
    let lambda = num("lambda", &field("lambda")?)?;
    let alpha = num("alpha", &field("alpha")?)?;
    let center = num("center", &field("center")?)?;
    let r_val = opt_num("r", &field("r")?)?;
    let target_density = opt_num("target_density", &field("target_density")?)?;
    let cap = opt_num("cap", &field("cap")?)?;
    let n_train_users = num("n_train_users", &field("n_train_users")?)?;
    let filters = field("filters")?;
    let (min_user_items, min_item_users) = filters
        .split_once(' ')
        .ok_or_else(|| Error::ModelFormat(format!("bad filters {filters:?}")))?;
    let min_user_items = num("filters", min_user_items)?;
    let min_item_users = num("filters", min_item_users)?;
    let split_raw = field("split")?;
    let split = if split_raw == "-" {
        None
    } else {
        let parts: Vec<&str> = split_raw.split(' ').collect();
        if parts.len() != 4 {
            return Err(Error::ModelFormat(format!("bad split {split_raw:?}")));
        }
        Some(SplitParams {
            val_frac: num("split", parts[0])?,
            test_frac: num("split", parts[1])?,
            fold_in_frac: num("split", parts[2])?,
            seed: num("split", parts[3])?,
        })
    };
    Ok(ModelHeader {
        version,
        m,
        nnz,
        solver,
        lambda,
        alpha,
        center,
        r: r_val,
        target_density,
        cap,
        n_train_users,
        min_user_items,
        min_item_users,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn header(m: usize, solver: SolverKind) -> ModelHeader {
        ModelHeader {
            version: FORMAT_VERSION,
            m,
            nnz: 0,
            solver,
            lambda: 0.1,
            alpha: 0.75,
            center: true,
            r: None,
            target_density: None,
            cap: None,
            n_train_users: 3,
            min_user_items: 0,
            min_item_users: 2,
            split: Some(SplitParams {
                val_frac: 0.1,
                test_frac: 0.2,
                fold_in_frac: 0.8,
                seed: 42,
            }),
        }
    }

    fn sample(solver: SolverKind) -> ModelFile {
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 1.0 / 3.0, 0.0, -2.5e-17, 0.0, 0.1, 7.0, 0.0, 0.0]);
        let mut w = WeightMatrix::dense(b, SolverKind::Dense, 0.1).unwrap();
        if solver == SolverKind::Sparse {
            let cols = SparseColumns::from_triplets(3, w.triplets()).unwrap();
            w = WeightMatrix::sparse(3, cols, solver, 0.1);
            w.r = Some(0.5);
        }
        w.alpha = Some(0.75);
        let stats = PreprocessStats {
            mu: vec![0.1, 0.2, 1.0 / 3.0],
            std: vec![0.3, 0.0, 0.7],
            alpha: 0.75,
            s: vec![0.3f64.powf(0.75), 1.0, 0.7f64.powf(0.75)],
        };
        let mut h = header(3, solver);
        h.r = w.r;
        ModelFile::new(h, vec!["a".into(), "b c".into(), "d\te".into()], stats, w).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for solver in [SolverKind::Dense, SolverKind::Sparse] {
            let model = sample(solver);
            let bytes = model.to_bytes().unwrap();
            let back = ModelFile::read_from(&mut &bytes[..]).unwrap();
            assert_eq!(back.header, model.header);
            assert_eq!(back.items, model.items);
            assert_eq!(back.stats, model.stats);
            let bits = |w: &WeightMatrix| {
                w.triplets()
                    .into_iter()
                    .map(|(j, i, v)| (j, i, v.to_bits()))
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&back.weights), bits(&model.weights));
            assert_eq!(back.to_bytes().unwrap(), bytes);
            assert!(back.weights.diagonal_is_exact_zero());
        }
    }

    #[test]
    fn header_is_plain_text() {
        let model = sample(SolverKind::Dense);
        let bytes = model.to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("gmrf-model 1\nm 3\nnnz 4\nsolver dense\n"));
        assert!(text.contains("filters 0 2\nsplit 0.1 0.2 0.8 42\nitems\na\nb c\nd\te\npayload gmrf-weights 1\n"));
    }

    #[test]
    fn rejects_corrupt_files() {
        let bytes = sample(SolverKind::Dense).to_bytes().unwrap();
        assert!(ModelFile::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelFile::read_from(&mut &extra[..]).is_err());
        assert!(ModelFile::read_from(&mut &b"not a model\n"[..]).is_err());
        let bumped = String::from_utf8_lossy(&bytes).replacen("gmrf-model 1", "gmrf-model 9", 1);
        assert!(ModelFile::read_from(&mut bumped.as_bytes()).is_err());
    }

    #[test]
    fn rejects_inconsistent_sizes_and_bad_ids() {
        let model = sample(SolverKind::Dense);
        assert!(ModelFile::new(
            header(2, SolverKind::Dense),
            model.items.clone(),
            model.stats.clone(),
            model.weights.clone()
        )
        .is_err());
        let mut bad = model.clone();
        bad.items[0] = "x\ny".into();
        assert!(bad.to_bytes().is_err());
    }
}
