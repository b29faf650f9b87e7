//! Side-by-side nutrient tables over a set of products.

use serde::Serialize;

use crate::catalog::{normalize_amount, NutrientEntry, NutrientUnit, Product};
use crate::decimal::Decimal;

pub use crate::catalog::Basis;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("at least one product is required")]
    EmptyProductList,
    #[error("per-100 comparison needs every serving in the same unit (ml or g)")]
    MixedServingUnits,
    #[error("product `{0}` appears twice in the comparison")]
    DuplicateProduct(String),
    #[error("nutrient `{key}` is labelled in both {first} and {second}")]
    IncompatibleUnits {
        key: String,
        first: NutrientUnit,
        second: NutrientUnit,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonRow {
    pub key: String,
    pub unit: NutrientUnit,
    /// One slot per product column; `None` when the label omits the nutrient.
    pub values: Vec<Option<Decimal>>,
    pub min_marks: Vec<bool>,
    pub max_marks: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonTable {
    pub product_ids: Vec<String>,
    pub basis: Basis,
    pub rows: Vec<ComparisonRow>,
}

/// Multiplier taking `from` into `to`, for mass units only.
fn mass_factor(from: NutrientUnit, to: NutrientUnit) -> Option<Decimal> {
    let micrograms = |u: NutrientUnit| match u {
        NutrientUnit::G => Some(1_000_000),
        NutrientUnit::Mg => Some(1_000),
        NutrientUnit::Mcg => Some(1),
        NutrientUnit::Kcal => None,
    };
    if from == to {
        return Some(Decimal::from_int(1));
    }
    Some(Decimal::ratio(micrograms(from)?, micrograms(to)?))
}

/// Builds the table: one column per product, one row per nutrient key in
/// first-appearance order, values normalised to `basis`, extremes marked.
///
/// A key labelled in different mass units is converted to the unit of its
/// first appearance.
pub fn build_comparison(products: &[&Product], basis: Basis) -> Result<ComparisonTable, CompareError> {
    let first = products.first().ok_or(CompareError::EmptyProductList)?;
    for (i, p) in products.iter().enumerate() {
        if products[..i].iter().any(|q| q.id == p.id) {
            return Err(CompareError::DuplicateProduct(p.id.clone()));
        }
    }
    if basis == Basis::Per100 && products.iter().any(|p| p.serving.unit != first.serving.unit) {
        return Err(CompareError::MixedServingUnits);
    }

    let columns = products.len();
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for (col, product) in products.iter().enumerate() {
        for entry in &product.nutrition.entries {
            let row = match rows.iter_mut().position(|r| r.key == entry.key) {
                Some(i) => &mut rows[i],
                None => {
                    rows.push(ComparisonRow {
                        key: entry.key.clone(),
                        unit: entry.unit,
                        values: vec![None; columns],
                        min_marks: vec![false; columns],
                        max_marks: vec![false; columns],
                    });
                    rows.last_mut().expect("just pushed")
                }
            };
            let factor = mass_factor(entry.unit, row.unit).ok_or_else(|| CompareError::IncompatibleUnits {
                key: entry.key.clone(),
                first: row.unit,
                second: entry.unit,
            })?;
            let converted = NutrientEntry {
                amount: entry.amount * factor,
                unit: row.unit,
                ..entry.clone()
            };
            row.values[col] = Some(normalize_amount(&converted, &product.serving, basis));
        }
    }

    Ok(mark_extremes(ComparisonTable {
        product_ids: products.iter().map(|p| p.id.clone()).collect(),
        basis,
        rows,
    }))
}

/// Recomputes min/max marks. A row needs two present values to be marked;
/// ties mark every tied column.
pub fn mark_extremes(mut table: ComparisonTable) -> ComparisonTable {
    for row in &mut table.rows {
        let present: Vec<Decimal> = row.values.iter().flatten().copied().collect();
        row.min_marks = vec![false; row.values.len()];
        row.max_marks = vec![false; row.values.len()];
        if present.len() < 2 {
            continue;
        }
        let min = present.iter().min().copied();
        let max = present.iter().max().copied();
        for (i, value) in row.values.iter().enumerate() {
            row.min_marks[i] = *value == min;
            row.max_marks[i] = *value == max;
        }
    }
    table
}

impl ComparisonTable {
    /// CSV with `key,unit`, then for every product a value column headed by
    /// its id and a `<id>:mark` column holding `min`, `max`, `minmax` or
    /// nothing.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let mut header = vec!["key".to_string(), "unit".to_string()];
        for id in &self.product_ids {
            header.push(id.clone());
            header.push(format!("{id}:mark"));
        }
        writer.write_record(&header).expect("in-memory csv write");
        for row in &self.rows {
            let mut record = vec![row.key.clone(), row.unit.as_str().to_string()];
            for i in 0..self.product_ids.len() {
                record.push(match row.values[i] {
                    Some(v) if self.basis == Basis::Per100 => v.to_fixed(2),
                    Some(v) => v.to_string(),
                    None => String::new(),
                });
                record.push(
                    match (row.min_marks[i], row.max_marks[i]) {
                        (true, true) => "minmax",
                        (true, false) => "min",
                        (false, true) => "max",
                        (false, false) => "",
                    }
                    .to_string(),
                );
            }
            writer.write_record(&record).expect("in-memory csv write");
        }
        writer.into_inner().expect("in-memory csv flush")
    }

    pub fn row(&self, key: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.key == key)
    }
}
