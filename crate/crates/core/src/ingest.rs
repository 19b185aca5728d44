//! Interaction data: loading, the sparse user-item matrix, and
//! strong-generalization splits (train / validation / test users disjoint).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Bijection between external string IDs and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(Error::Data(format!("duplicate id {id:?}")));
            }
        }
        Ok(IdMap { ids, index })
    }

    /// Index of `id`, inserting it at the end if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&k) = self.index.get(id) {
            return k;
        }
        let k = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), k);
        k
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, k: usize) -> &str {
        &self.ids[k]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Sparse users x items matrix in compressed row form, with ID maps.
///
/// Rows hold strictly increasing item indices. Matrices produced by
/// [`load_interactions`] have no unmapped IDs; matrices built with
/// [`InteractionMatrix::from_indexed`] may contain empty item columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    users: IdMap,
    items: IdMap,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: char,
    pub has_header: bool,
    pub binarize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: ',',
            has_header: false,
            binarize: false,
        }
    }
}

impl InteractionMatrix {
    /// Builds the matrix from `(user, item, value)` triplets over fixed ID maps.
    /// Duplicate pairs keep the largest value.
    pub fn from_triplets(
        users: IdMap,
        items: IdMap,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let n_users = users.len();
        let n_items = items.len();
        let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
        for (u, i, v) in triplets {
            if u >= n_users || i >= n_items {
                return Err(Error::Data(format!(
                    "entry ({u}, {i}) outside {n_users} x {n_items}"
                )));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Data(format!(
                    "interaction value {v} for ({u}, {i}) is not a finite nonnegative number"
                )));
            }
            merged
                .entry((u, i))
                .and_modify(|old| *old = old.max(v))
                .or_insert(v);
        }
        let mut entries: Vec<((usize, usize), f64)> = merged.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);

        let mut indptr = vec![0usize; n_users + 1];
        for ((u, _), _) in &entries {
            indptr[u + 1] += 1;
        }
        for u in 0..n_users {
            indptr[u + 1] += indptr[u];
        }
        let indices = entries.iter().map(|((_, i), _)| *i).collect();
        let values = entries.iter().map(|(_, v)| *v).collect();
        Ok(InteractionMatrix {
            indptr,
            indices,
            values,
            users,
            items,
        })
    }

    /// Matrix over synthetic IDs `u0..`, `i0..`.
    pub fn from_indexed(
        n_users: usize,
        n_items: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let users = IdMap::from_ids((0..n_users).map(|u| format!("u{u}")).collect())?;
        let items = IdMap::from_ids((0..n_items).map(|i| format!("i{i}")).collect())?;
        Self::from_triplets(users, items, triplets)
    }

    /// Matrix from a dense row-major slice of rows; zeros are not stored.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_items = rows.first().map_or(0, Vec::len);
        let mut trip = Vec::new();
        for (u, row) in rows.iter().enumerate() {
            if row.len() != n_items {
                return Err(Error::DimensionMismatch {
                    expected: n_items,
                    found: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((u, i, v));
                }
            }
        }
        Self::from_indexed(rows.len(), n_items, trip)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    /// Item indices and values of user `u`.
    pub fn row(&self, u: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[u]..self.indptr[u + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, u: usize) -> usize {
        self.indptr[u + 1] - self.indptr[u]
    }

    pub fn value(&self, u: usize, i: usize) -> f64 {
        let (idx, val) = self.row(u);
        idx.binary_search(&i).map_or(0.0, |p| val[p])
    }

    /// Iterates `(user, item, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_users()).flat_map(move |u| {
            let (idx, val) = self.row(u);
            idx.iter().zip(val).map(move |(&i, &v)| (u, i, v))
        })
    }

    /// Number of users with a stored entry for each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_items()];
        for &i in &self.indices {
            counts[i] += 1;
        }
        counts
    }

    /// Keeps the listed users (in the given order) and every item.
    pub fn select_users(&self, users: &[usize]) -> Self {
        let ids = users.iter().map(|&u| self.users.id(u).to_owned()).collect();
        let user_map = IdMap::from_ids(ids).expect("selected users are distinct");
        let mut indptr = Vec::with_capacity(users.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &u in users {
            let (idx, val) = self.row(u);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        InteractionMatrix {
            indptr,
            indices,
            values,
            users: user_map,
            items: self.items.clone(),
        }
    }

    /// Copy with every stored value replaced by 1.0.
    pub fn binarized(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = 1.0);
        out
    }

    /// Repeatedly drops items seen by fewer than `min_item_users` users and
    /// users with fewer than `min_user_items` items until both hold.
    /// Dropped IDs disappear from the maps; indices are reassigned in order.
    pub fn filter_min_counts(&self, min_user_items: usize, min_item_users: usize) -> Result<Self> {
        let mut cur = self.clone();
        loop {
            let item_ok: Vec<bool> = cur
                .item_counts()
                .iter()
                .map(|&c| c >= min_item_users.max(1))
                .collect();
            let user_ok: Vec<bool> = (0..cur.n_users())
                .map(|u| {
                    let (idx, _) = cur.row(u);
                    idx.iter().filter(|&&i| item_ok[i]).count() >= min_user_items.max(1)
                })
                .collect();
            if item_ok.iter().all(|&b| b) && user_ok.iter().all(|&b| b) {
                return Ok(cur);
            }
            let mut users = IdMap::new();
            let mut items = IdMap::new();
            let mut trip = Vec::new();
            for (u, i, v) in cur.iter() {
                if user_ok[u] && item_ok[i] {
                    let uu = users.intern(cur.users.id(u));
                    let ii = items.intern(cur.items.id(i));
                    trip.push((uu, ii, v));
                }
            }
            if trip.is_empty() {
                return Err(Error::Data(
                    "activity filters removed every interaction".into(),
                ));
            }
            cur = InteractionMatrix::from_triplets(users, items, trip)?;
        }
    }
}

/// Reads delimited `user,item[,value]` rows. Dense indices follow first
/// appearance in the file. Blank lines are skipped.
pub fn load_interactions(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<InteractionMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut trip = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        if lineno == 1 && opts.has_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRow {
            path: path.to_owned(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(opts.delimiter).map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(malformed(format!(
                "expected user{d}item[{d}value], found {} field(s)",
                fields.len(),
                d = opts.delimiter
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(malformed("empty user or item id".into()));
        }
        let value = match fields.get(2) {
            None => 1.0,
            Some(raw) => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| malformed(format!("value {raw:?} is not a number")))?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(malformed(format!("value {raw:?} must be finite and >= 0")));
                }
                v
            }
        };
        let value = if opts.binarize { 1.0 } else { value };
        let u = users.intern(fields[0]);
        let i = items.intern(fields[1]);
        trip.push((u, i, value));
    }
    if trip.is_empty() {
        return Err(Error::EmptyInput(path.to_owned()));
    }
    InteractionMatrix::from_triplets(users, items, trip)
}

/// A held-out user: ranking input (`fold_in`) and targets (`held_out`).
/// Both lists are sorted item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldOutUser {
    pub user: usize,
    pub fold_in: Vec<usize>,
    pub held_out: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSplit {
    pub train_users: Vec<usize>,
    pub validation: Vec<HeldOutUser>,
    pub test: Vec<HeldOutUser>,
}

impl EvalSplit {
    pub fn validation_users(&self) -> Vec<usize> {
        self.validation.iter().map(|h| h.user).collect()
    }

    pub fn test_users(&self) -> Vec<usize> {
        self.test.iter().map(|h| h.user).collect()
    }
}

/// Partitions users into train / validation / test with a seeded shuffle,
/// then splits each held-out user's items into fold-in and held-out parts.
///
/// Pool sizes are `round(frac * n_users)`. Users with fewer than two items
/// drawn into a held-out pool are moved to training.
pub fn split_strong_generalization(
    mat: &InteractionMatrix,
    val_frac: f64,
    test_frac: f64,
    fold_in_frac: f64,
    seed: u64,
) -> Result<EvalSplit> {
    let in_unit = |x: f64| x > 0.0 && x < 1.0;
    if !(val_frac >= 0.0 && test_frac >= 0.0 && in_unit(val_frac + test_frac)) {
        return Err(Error::Config(format!(
            "need 0 < val_frac + test_frac < 1 (got {val_frac} + {test_frac})"
        )));
    }
    if !in_unit(fold_in_frac) {
        return Err(Error::Config(format!(
            "fold_in_frac must lie in (0, 1), got {fold_in_frac}"
        )));
    }
    let n = mat.n_users();
    let n_val = (val_frac * n as f64).round() as usize;
    let n_test = (test_frac * n as f64).round() as usize;
    let empty_pool = |requested: f64, size: usize| requested > 0.0 && size == 0;
    if empty_pool(val_frac, n_val) || empty_pool(test_frac, n_test) || n_val + n_test >= n {
        return Err(Error::Data(format!(
            "{n} users are too few for validation/test fractions {val_frac}/{test_frac}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut train_users: Vec<usize> = perm[n_val + n_test..].to_vec();
    let mut hold = |pool: &[usize], train: &mut Vec<usize>| -> Vec<HeldOutUser> {
        let mut out = Vec::with_capacity(pool.len());
        for &u in pool {
            let (idx, _) = mat.row(u);
            let k = idx.len();
            if k < 2 {
                train.push(u);
                continue;
            }
            let mut items = idx.to_vec();
            items.shuffle(&mut rng);
            let n_fold = ((fold_in_frac * k as f64).round() as usize).clamp(1, k - 1);
            let mut fold_in = items[..n_fold].to_vec();
            let mut held_out = items[n_fold..].to_vec();
            fold_in.sort_unstable();
            held_out.sort_unstable();
            out.push(HeldOutUser {
                user: u,
                fold_in,
                held_out,
            });
        }
        out.sort_unstable_by_key(|h| h.user);
        out
    };
    let validation = hold(&perm[..n_val], &mut train_users);
    let test = hold(&perm[n_val..n_val + n_test], &mut train_users);
    train_users.sort_unstable();
    if (val_frac > 0.0 && validation.is_empty()) || (test_frac > 0.0 && test.is_empty()) {
        warn!("a held-out pool is empty after removing users with fewer than 2 items");
    }
    Ok(EvalSplit {
        train_users,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("u1,i1\nu1,i2\nu2,i1\n");
        let m = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.nnz()), (2, 2, 3));
        assert_eq!(m.value(0, 1), 1.0);
        assert_eq!(m.value(1, 1), 0.0);
    }

    #[test]
    fn duplicates_collapse_to_max() {
        let f = write_tmp("u1,i1,2\nu1,i2\nu2,i1\nu1,i1,5\nu1,i1,3\n");
        let m = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.value(0, 0), 5.0);

        let opts = LoadOptions {
            binarize: true,
            ..Default::default()
        };
        let b = load_interactions(f.path(), &opts).unwrap();
        assert!(b.iter().all(|(_, _, v)| v == 1.0));
    }

    #[test]
    fn missing_item_reports_line() {
        let f = write_tmp("u1\n");
        match load_interactions(f.path(), &LoadOptions::default()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("user\titem\nu1\ti1\nu2\ti1\t-1\n");
        let opts = LoadOptions {
            delimiter: '\t',
            has_header: true,
            ..Default::default()
        };
        match load_interactions(f.path(), &opts) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_missing_files() {
        let f = write_tmp("\n\n");
        assert!(matches!(
            load_interactions(f.path(), &LoadOptions::default()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            load_interactions("/nonexistent/x.csv", &LoadOptions::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn id_round_trip() {
        let f = write_tmp("a,x\nb,y\nc,z\na,z\n");
        let m = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        for k in 0..m.n_items() {
            assert_eq!(m.items().get(m.items().id(k)), Some(k));
        }
        assert_eq!(m.items().ids(), ["x", "y", "z"]);
    }

    fn users_with_items(n: usize, items_per_user: usize) -> InteractionMatrix {
        let trip = (0..n).flat_map(|u| (0..items_per_user).map(move |j| (u, (u + j) % 10, 1.0)));
        InteractionMatrix::from_indexed(n, 10, trip).unwrap()
    }

    #[test]
    fn split_partition_sizes() {
        let m = users_with_items(100, 4);
        let s = split_strong_generalization(&m, 0.1, 0.1, 0.8, 7).unwrap();
        assert_eq!(s.train_users.len(), 80);
        assert_eq!(s.validation.len(), 10);
        assert_eq!(s.test.len(), 10);
        let mut all: Vec<usize> = s.train_users.clone();
        all.extend(s.validation_users());
        all.extend(s.test_users());
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        for h in s.validation.iter().chain(&s.test) {
            assert_eq!(h.fold_in.len(), 3);
            assert_eq!(h.held_out.len(), 1);
            assert!(h.fold_in.iter().all(|i| !h.held_out.contains(i)));
        }
        assert_eq!(s, split_strong_generalization(&m, 0.1, 0.1, 0.8, 7).unwrap());
        assert_ne!(s, split_strong_generalization(&m, 0.1, 0.1, 0.8, 8).unwrap());
    }

    #[test]
    fn single_interaction_user_stays_in_training() {
        let m = users_with_items(20, 1);
        let s = split_strong_generalization(&m, 0.25, 0.25, 0.5, 1).unwrap();
        assert!(s.validation.is_empty() && s.test.is_empty());
        assert_eq!(s.train_users.len(), 20);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let m = users_with_items(10, 3);
        for (v, t, f) in [(0.5, 0.5, 0.8), (0.0, 0.0, 0.8), (0.1, 0.1, 1.0), (-0.1, 0.3, 0.5)] {
            assert!(matches!(
                split_strong_generalization(&m, v, t, f, 0),
                Err(Error::Config(_))
            ));
        }
        let tiny = users_with_items(3, 3);
        assert!(split_strong_generalization(&tiny, 0.1, 0.1, 0.8, 0).is_err());
    }

    #[test]
    fn activity_filter() {
        let m = InteractionMatrix::from_indexed(
            3,
            3,
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)],
        )
        .unwrap();
        let f = m.filter_min_counts(2, 2).unwrap();
        assert_eq!((f.n_users(), f.n_items(), f.nnz()), (2, 2, 4));
        assert_eq!(f.items().ids(), ["i0", "i1"]);
    }
}
