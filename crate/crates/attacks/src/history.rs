use indexmap::IndexMap;

use sbpm_core::tabular::{Record, RecordKey};

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub record: Record,
    /// Exact distance to the nearest train record.
    pub distance: f64,
}

/// Every record whose distance the attack has learned, in discovery order.
#[derive(Clone, Debug, Default)]
pub struct History {
    entries: IndexMap<RecordKey, HistoryEntry>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, row: &[f64]) -> bool {
        self.entries.contains_key(&RecordKey::of(row))
    }

    pub fn distance(&self, row: &[f64]) -> Option<f64> {
        self.entries.get(&RecordKey::of(row)).map(|e| e.distance)
    }

    /// Keeps the first distance recorded for a record.
    pub fn insert(&mut self, record: Record, distance: f64) -> bool {
        let key = RecordKey::of(&record);
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, HistoryEntry { record, distance });
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.values()
    }

    /// Entries with distance at most `max`, closest first, then in discovery order.
    pub fn within(&self, max: f64) -> Vec<HistoryEntry> {
        let mut out: Vec<(usize, &HistoryEntry)> = self
            .entries
            .values()
            .enumerate()
            .filter(|(_, e)| e.distance <= max)
            .collect();
        out.sort_by(|a, b| a.1.distance.total_cmp(&b.1.distance).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(_, e)| e.clone()).collect()
    }
}
