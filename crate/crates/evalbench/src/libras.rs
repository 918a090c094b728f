//! The bundled Libras Movement table (360 hand-movement curves, 15 classes).

use knowlens_core::dataset::{load_dataset, AttributeSpec, Dataset, Value};

use crate::Result;

const CSV: &str = include_str!("../data/libras_movement.csv");

/// The dataset (90 embedding coordinates plus the categorical `movement`)
/// and the dense class index of every row.
pub fn load_libras() -> Result<(Dataset, Vec<usize>)> {
    let mut schema: Vec<AttributeSpec> = (1..=45)
        .flat_map(|i| {
            [
                AttributeSpec::embedding(format!("x{i:02}")),
                AttributeSpec::embedding(format!("y{i:02}")),
            ]
        })
        .collect();
    schema.push(AttributeSpec::categorical("movement"));
    let ds = load_dataset(CSV.as_bytes(), &schema)?;
    let attr = ds.attribute_index("movement")?;
    let labels = (0..ds.n())
        .map(|row| match ds.value(attr, row) {
            Value::Cat(name) => name[1..].parse::<usize>().map(|m| m - 1).unwrap_or(0),
            Value::Num(_) => 0,
        })
        .collect();
    Ok((ds, labels))
}
