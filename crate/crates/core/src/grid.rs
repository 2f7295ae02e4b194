//! Dense ethnicity-by-column probability tables.
//!
//! Both the attacker prior over (ethnicity, haplotype pair) and the joint
//! over (ethnicity, program output) are stored in this shape: one column per
//! value of the observable, one row per ethnicity.

use crate::population::{EthnicityLabel, ETHNICITY_COUNT};

/// Probability mass indexed by `(ethnicity, column)`.
///
/// Columns are kept in ascending order of `C` so that lookups can binary
/// search and serialized tables are stable.
#[derive(Debug, Clone, PartialEq)]
pub struct EthnicityGrid<C> {
    columns: Vec<C>,
    cells: Vec<[f64; ETHNICITY_COUNT]>,
}

impl<C: Ord + Clone> EthnicityGrid<C> {
    /// Builds a grid from `(column, per-ethnicity mass)` entries. Entries
    /// sharing a column are summed in the order given.
    pub fn from_entries(entries: impl IntoIterator<Item = (C, [f64; ETHNICITY_COUNT])>) -> Self {
        let mut merged = std::collections::BTreeMap::<C, [f64; ETHNICITY_COUNT]>::new();
        for (column, mass) in entries {
            let slot = merged.entry(column).or_insert([0.0; ETHNICITY_COUNT]);
            for (acc, m) in slot.iter_mut().zip(mass) {
                *acc += m;
            }
        }
        let (columns, cells) = merged.into_iter().unzip();
        Self { columns, cells }
    }

    pub fn columns(&self) -> &[C] {
        &self.columns
    }

    pub fn cells(&self) -> &[[f64; ETHNICITY_COUNT]] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_index(&self, column: &C) -> Option<usize> {
        self.columns.binary_search(column).ok()
    }

    pub fn column(&self, column: &C) -> Option<&[f64; ETHNICITY_COUNT]> {
        self.column_index(column).map(|i| &self.cells[i])
    }

    pub fn get(&self, ethnicity: EthnicityLabel, column: &C) -> f64 {
        self.column(column).map_or(0.0, |c| c[ethnicity.index()])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&C, &[f64; ETHNICITY_COUNT])> {
        self.columns.iter().zip(self.cells.iter())
    }

    /// Column marginal, i.e. p(O = column).
    pub fn column_mass(&self, index: usize) -> f64 {
        self.cells[index].iter().sum()
    }

    /// Row marginals, one per ethnicity.
    pub fn row_sums(&self) -> [f64; ETHNICITY_COUNT] {
        let mut sums = [0.0; ETHNICITY_COUNT];
        for cell in &self.cells {
            for (s, m) in sums.iter_mut().zip(cell) {
                *s += m;
            }
        }
        sums
    }

    pub fn total(&self) -> f64 {
        self.row_sums().iter().sum()
    }

    /// Keeps only the columns for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&C, &[f64; ETHNICITY_COUNT]) -> bool) {
        let (columns, cells) = std::mem::take(&mut self.columns)
            .into_iter()
            .zip(std::mem::take(&mut self.cells))
            .filter(|(c, m)| keep(c, m))
            .unzip();
        self.columns = columns;
        self.cells = cells;
    }
}
