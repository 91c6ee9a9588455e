//! Rating-log ingestion: parsing, time-based splitting, window partitioning
//! and the consecutive-window transition triples that drive training.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Sparse map from (user, item) to a real value. Ordered so that iteration
/// is deterministic.
pub type PairMap = BTreeMap<(u32, u32), f64>;
/// Ordered set of (user, item) pairs.
pub type PairSet = BTreeSet<(u32, u32)>;

/// Inclusive rating scale, e.g. [1, 5] for MovieLens or [1, 100] for
/// Yahoo-style logs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(Error::Config(format!(
                "rating scale requires min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    /// The 5-star scale used by MovieLens.
    pub fn five_star() -> Self {
        Self { min: 1.0, max: 5.0 }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clip(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// One (user, item, value, timestamp) event; the atomic ingestion unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub value: f64,
    pub timestamp: i64,
}

/// Global matrix dimensions shared by every window of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixDims {
    pub n_users: u32,
    pub n_items: u32,
}

impl MatrixDims {
    /// Dimensions implied by the largest ids seen in `records`.
    pub fn from_records(records: &[RatingRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyData("no records to size matrix from".into()));
        }
        Ok(Self {
            n_users: records.iter().map(|r| r.user_id).max().unwrap(),
            n_items: records.iter().map(|r| r.item_id).max().unwrap(),
        })
    }
}

/// Sparse user-item matrix for one time window. Keys are 1-based ids; a key
/// being present is the observation indicator for that pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    pub window_index: usize,
    pub n_users: u32,
    pub n_items: u32,
    entries: PairMap,
}

impl ObservationMatrix {
    pub fn new(window_index: usize, dims: MatrixDims) -> Self {
        Self {
            window_index,
            n_users: dims.n_users,
            n_items: dims.n_items,
            entries: PairMap::new(),
        }
    }

    /// Builds a window from its records, resolving duplicate (user, item)
    /// keys by latest timestamp (input order breaks timestamp ties).
    pub fn from_records(
        window_index: usize,
        records: &[RatingRecord],
        dims: MatrixDims,
    ) -> Result<Self> {
        let mut matrix = Self::new(window_index, dims);
        let mut ordered: Vec<&RatingRecord> = records.iter().collect();
        ordered.sort_by_key(|r| r.timestamp);
        for record in ordered {
            matrix.insert(record.user_id, record.item_id, record.value)?;
        }
        Ok(matrix)
    }

    /// Inserts or overwrites one entry.
    pub fn insert(&mut self, user_id: u32, item_id: u32, value: f64) -> Result<()> {
        if user_id == 0 || user_id > self.n_users || item_id == 0 || item_id > self.n_items {
            return Err(Error::Index(format!(
                "entry ({user_id}, {item_id}) outside {}x{} matrix",
                self.n_users, self.n_items
            )));
        }
        self.entries.insert((user_id, item_id), value);
        Ok(())
    }

    pub fn get(&self, user_id: u32, item_id: u32) -> Option<f64> {
        self.entries.get(&(user_id, item_id)).copied()
    }

    pub fn contains(&self, user_id: u32, item_id: u32) -> bool {
        self.entries.contains_key(&(user_id, item_id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in (user, item) order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|(&(u, i), &v)| (u, i, v))
    }

    /// Observed (user, item) pairs in order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.entries.keys().copied()
    }

    pub fn dims(&self) -> MatrixDims {
        MatrixDims {
            n_users: self.n_users,
            n_items: self.n_items,
        }
    }

    /// Fraction of the full matrix that is observed.
    pub fn sparsity(&self) -> f64 {
        self.entries.len() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    /// Merges `other` on top of this window; colliding keys take `other`'s
    /// value.
    pub fn absorb(&mut self, other: &ObservationMatrix) {
        for (key, value) in &other.entries {
            self.entries.insert(*key, *value);
        }
    }
}

/// One consecutive-window observation of a (user, item) pair, carrying the
/// action value logged in the later window. `action_only` marks pairs whose
/// feedback first appears in the later window, with no entry in the earlier
/// one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTriple {
    pub user_id: u32,
    pub item_id: u32,
    pub o_window: usize,
    pub o_next_window: usize,
    pub action_value: f64,
    pub action_only: bool,
}

/// Parses one MovieLens-format line `UserID::MovieID::Rating::Timestamp`.
pub fn parse_rating_line(line: &str, scale: &RatingScale) -> Result<RatingRecord> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split("::").collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!(
            "expected 4 '::'-separated fields, got {}",
            fields.len()
        )));
    }
    parse_fields(fields[0], fields[1], fields[2], fields[3], scale)
}

/// Parses one comma-separated line `user,item,value,timestamp`; the generic
/// adapter for non-MovieLens logs.
pub fn parse_csv_rating_line(line: &str, scale: &RatingScale) -> Result<RatingRecord> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!(
            "expected 4 comma-separated fields, got {}",
            fields.len()
        )));
    }
    parse_fields(fields[0], fields[1], fields[2], fields[3], scale)
}

fn parse_fields(
    user: &str,
    item: &str,
    value: &str,
    timestamp: &str,
    scale: &RatingScale,
) -> Result<RatingRecord> {
    let user_id: u32 = user
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid user id {user:?}")))?;
    let item_id: u32 = item
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid item id {item:?}")))?;
    if user_id == 0 || item_id == 0 {
        return Err(Error::Parse("user and item ids must be >= 1".into()));
    }
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid rating {value:?}")))?;
    if !scale.contains(value) {
        return Err(Error::Range {
            value,
            min: scale.min,
            max: scale.max,
        });
    }
    let timestamp: i64 = timestamp
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid timestamp {timestamp:?}")))?;
    Ok(RatingRecord {
        user_id,
        item_id,
        value,
        timestamp,
    })
}

/// Splits records by time: the earliest `ceil(train_fraction * N)` records
/// (ordered by timestamp, then user, then item) become the training set.
pub fn split_by_time(
    records: &[RatingRecord],
    train_fraction: f64,
) -> Result<(Vec<RatingRecord>, Vec<RatingRecord>)> {
    if records.is_empty() {
        return Err(Error::EmptyData("cannot split zero records".into()));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.timestamp, r.user_id, r.item_id));
    let n_train = ((train_fraction * sorted.len() as f64).ceil() as usize).min(sorted.len());
    let test = sorted.split_off(n_train);
    Ok((sorted, test))
}

/// Window index of `timestamp` when `[t_min, t_max]` is divided into
/// `n_windows` equal-duration half-open intervals of width
/// `(t_max - t_min + 1) / n_windows`.
fn window_of(timestamp: i64, t_min: i64, span: i64, n_windows: usize) -> usize {
    // Exact integer form of floor((t - t_min) / (span / n)).
    let offset = (timestamp - t_min) as i128;
    ((offset * n_windows as i128) / span as i128) as usize
}

/// Partitions records into `n_windows` equal-duration windows over the
/// observed time range. Windows may be empty; duplicates within a window
/// resolve to the latest timestamp.
pub fn window_partition(
    records: &[RatingRecord],
    n_windows: usize,
    dims: MatrixDims,
) -> Result<Vec<ObservationMatrix>> {
    if n_windows < 2 {
        return Err(Error::Config(format!(
            "need at least 2 windows, got {n_windows}"
        )));
    }
    if records.is_empty() {
        return Err(Error::EmptyData("cannot window zero records".into()));
    }
    let t_min = records.iter().map(|r| r.timestamp).min().unwrap();
    let t_max = records.iter().map(|r| r.timestamp).max().unwrap();
    let span = t_max - t_min + 1;

    let mut buckets: Vec<Vec<RatingRecord>> = vec![Vec::new(); n_windows];
    for record in records {
        buckets[window_of(record.timestamp, t_min, span, n_windows)].push(*record);
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(w, bucket)| ObservationMatrix::from_records(w, &bucket, dims))
        .collect()
}

/// One triple per (user, item) pair observed in two consecutive windows; the
/// action value is the later window's logged value.
pub fn build_transitions(windows: &[ObservationMatrix]) -> Vec<TransitionTriple> {
    let mut triples = Vec::new();
    for pair in windows.windows(2) {
        let (current, next) = (&pair[0], &pair[1]);
        for (user_id, item_id) in current.pairs() {
            if let Some(action_value) = next.get(user_id, item_id) {
                triples.push(TransitionTriple {
                    user_id,
                    item_id,
                    o_window: current.window_index,
                    o_next_window: next.window_index,
                    action_value,
                    action_only: false,
                });
            }
        }
    }
    triples
}

/// Action-only triples: one per (user, item) pair whose feedback arrives in
/// a window, paired with the preceding window as the prior observation. The
/// logged value never appears in the earlier window, so a model fitted on
/// observations up to the earlier window has not seen it.
pub fn build_action_transitions(windows: &[ObservationMatrix]) -> Vec<TransitionTriple> {
    let mut triples = Vec::new();
    for pair in windows.windows(2) {
        let (current, next) = (&pair[0], &pair[1]);
        for (user_id, item_id, action_value) in next.entries() {
            triples.push(TransitionTriple {
                user_id,
                item_id,
                o_window: current.window_index,
                o_next_window: next.window_index,
                action_value,
                action_only: !current.contains(user_id, item_id),
            });
        }
    }
    triples
}

/// Union of `windows[..=last]` with later windows winning on collisions;
/// the result keeps `last`'s window index.
pub fn stack_windows(windows: &[ObservationMatrix], last: usize) -> Result<ObservationMatrix> {
    if last >= windows.len() {
        return Err(Error::Index(format!(
            "stack up to window {last} but only {} windows exist",
            windows.len()
        )));
    }
    let mut stacked = ObservationMatrix::new(windows[last].window_index, windows[0].dims());
    for window in &windows[..=last] {
        stacked.absorb(window);
    }
    Ok(stacked)
}

/// Cumulative stacks: element `w` is the union of windows `0..=w`.
pub fn cumulative_stacks(windows: &[ObservationMatrix]) -> Vec<ObservationMatrix> {
    let mut stacks: Vec<ObservationMatrix> = Vec::with_capacity(windows.len());
    for window in windows {
        let mut stacked = match stacks.last() {
            Some(prev) => {
                let mut m = prev.clone();
                m.window_index = window.window_index;
                m
            }
            None => ObservationMatrix::new(window.window_index, window.dims()),
        };
        stacked.absorb(window);
        stacks.push(stacked);
    }
    stacks
}

/// Writes windows in the columnar `window,user,item,value` format.
pub fn write_windows_csv<W: Write>(out: &mut W, windows: &[ObservationMatrix]) -> Result<()> {
    writeln!(out, "window,user,item,value")?;
    for window in windows {
        for (user, item, value) in window.entries() {
            writeln!(out, "{},{},{},{}", window.window_index, user, item, value)?;
        }
    }
    Ok(())
}

/// Reads windows written by [`write_windows_csv`]. Lines starting with `#`
/// are skipped; windows come back sorted by index.
pub fn read_windows_csv<R: BufRead>(input: R, dims: MatrixDims) -> Result<Vec<ObservationMatrix>> {
    let mut by_window: BTreeMap<usize, ObservationMatrix> = BTreeMap::new();
    let mut saw_header = false;
    for (line_no, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed != "window,user,item,value" {
                return Err(Error::Parse(format!(
                    "line {}: expected header 'window,user,item,value'",
                    line_no + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected 4 fields, got {}",
                line_no + 1,
                fields.len()
            )));
        }
        let window: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad window index", line_no + 1)))?;
        let user: u32 = fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad user id", line_no + 1)))?;
        let item: u32 = fields[2]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad item id", line_no + 1)))?;
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value", line_no + 1)))?;
        by_window
            .entry(window)
            .or_insert_with(|| ObservationMatrix::new(window, dims))
            .insert(user, item, value)?;
    }
    if !saw_header {
        return Err(Error::EmptyData("windows csv has no header".into()));
    }
    Ok(by_window.into_values().collect())
}
