//! CSV ingestion: header-based column selection, feature-to-group maps, and
//! normalization to group-contiguous column order.

use std::collections::BTreeMap;
use std::path::Path;

use bisel::{Dataset, GroupStructure};
use ndarray::{Array1, Array2};

use crate::error::{CliError, Result};

/// How feature columns are assigned to groups.
#[derive(Debug, Clone)]
pub enum GroupMap {
    /// Explicit (feature name, group id) pairs, usually read from a
    /// two-column CSV.
    Explicit(Vec<(String, usize)>),
    /// Consecutive equal blocks of the given size, in file column order.
    EqualBlocks(usize),
}

/// A loaded problem: the dataset plus the bookkeeping to name its columns.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Feature names in dataset column order (grouped contiguously).
    pub feature_names: Vec<String>,
    /// Group id of each dataset column, in the same order.
    pub group_ids: Vec<usize>,
    pub response_name: String,
}

/// Reads a `feature,group_id` CSV into an explicit group map.
pub fn load_group_map(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open group map {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("group map row {}: {e}", i + 1)))?;
        if record.len() != 2 {
            return Err(CliError::data(format!(
                "group map row {}: expected 2 columns, found {}",
                i + 1,
                record.len()
            )));
        }
        let id: usize = record[1].trim().parse().map_err(|_| {
            CliError::data(format!(
                "group map row {}: bad group id '{}'",
                i + 1,
                &record[1]
            ))
        })?;
        out.push((record[0].trim().to_string(), id));
    }
    if out.is_empty() {
        return Err(CliError::data("group map has no rows"));
    }
    Ok(out)
}

/// Loads a header CSV into a [`Dataset`]: the response column is selected by
/// name, every other column must be mapped to a group, and columns are
/// reordered to (group id, file order). Any non-numeric or non-finite cell
/// fails the load with a row-indexed diagnostic.
pub fn load_csv(path: &Path, response: &str, map: &GroupMap) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let response_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| CliError::data(format!("response column '{response}' not found")))?;
    let feature_positions: Vec<usize> =
        (0..headers.len()).filter(|&i| i != response_idx).collect();
    if feature_positions.is_empty() {
        return Err(CliError::data("no feature columns besides the response"));
    }

    // resolve the group id of every feature column
    let ids: Vec<usize> = match map {
        GroupMap::Explicit(pairs) => {
            let lookup: BTreeMap<&str, usize> =
                pairs.iter().map(|(name, id)| (name.as_str(), *id)).collect();
            let mut ids = Vec::with_capacity(feature_positions.len());
            for &pos in &feature_positions {
                let name = headers[pos].as_str();
                match lookup.get(name) {
                    Some(&id) => ids.push(id),
                    None => {
                        return Err(CliError::data(format!(
                            "feature column '{name}' is missing from the group map"
                        )))
                    }
                }
            }
            ids
        }
        GroupMap::EqualBlocks(size) => {
            let p = feature_positions.len();
            if *size == 0 || !p.is_multiple_of(*size) {
                return Err(CliError::usage(format!(
                    "cannot split {p} feature columns into equal blocks of {size}"
                )));
            }
            (0..p).map(|k| k / size + 1).collect()
        }
    };

    // order columns by (group id, file order)
    let mut order: Vec<usize> = (0..feature_positions.len()).collect();
    order.sort_by_key(|&k| (ids[k], k));
    let feature_names: Vec<String> = order
        .iter()
        .map(|&k| headers[feature_positions[k]].clone())
        .collect();
    let group_ids: Vec<usize> = order.iter().map(|&k| ids[k]).collect();
    let mut sizes = Vec::new();
    for &id in &group_ids {
        match sizes.last_mut() {
            Some((last_id, count)) if *last_id == id => *count += 1,
            _ => sizes.push((id, 1usize)),
        }
    }
    let group_sizes: Vec<usize> = sizes.iter().map(|&(_, c)| c).collect();

    // parse rows
    let mut y = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::data(format!("data row {}: {e}", i + 1)))?;
        let parse = |pos: usize| -> Result<f64> {
            let cell = record
                .get(pos)
                .ok_or_else(|| CliError::data(format!("data row {}: too few columns", i + 1)))?;
            let value: f64 = cell.trim().parse().map_err(|_| {
                CliError::data(format!(
                    "data row {}: column '{}': cannot parse '{}' as a number",
                    i + 1,
                    headers[pos],
                    cell.trim()
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::data(format!(
                    "data row {}: column '{}': non-finite value",
                    i + 1,
                    headers[pos]
                )));
            }
            Ok(value)
        };
        y.push(parse(response_idx)?);
        let mut row = Vec::with_capacity(order.len());
        for &k in &order {
            row.push(parse(feature_positions[k])?);
        }
        x_rows.push(row);
    }
    if x_rows.is_empty() {
        return Err(CliError::data("file contains no data rows"));
    }

    let n = x_rows.len();
    let p = order.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in x_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let groups =
        GroupStructure::new(group_sizes).map_err(|e| CliError::data(e.to_string()))?;
    let dataset = Dataset::new(x, Array1::from(y), groups)
        .map_err(|e| CliError::data(e.to_string()))?;
    Ok(LoadedData {
        dataset,
        feature_names,
        group_ids,
        response_name: response.to_string(),
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
    fn loads_basic_file() {
        let f = write_tmp("f1,f2,y\n1,2,3\n4,5,6\n7,8,9\n");
        let map = GroupMap::Explicit(vec![("f1".into(), 1), ("f2".into(), 1)]);
        let loaded = load_csv(f.path(), "y", &map).unwrap();
        assert_eq!(loaded.dataset.num_observations(), 3);
        assert_eq!(loaded.dataset.num_coefficients(), 2);
        assert_eq!(loaded.dataset.groups().num_groups(), 1);
        assert_eq!(loaded.dataset.y().to_vec(), vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn missing_response_is_a_named_error() {
        let f = write_tmp("f1,f2\n1,2\n");
        let map = GroupMap::EqualBlocks(1);
        let err = load_csv(f.path(), "outcome", &map).unwrap_err();
        assert!(err.to_string().contains("outcome"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn columns_reorder_into_group_contiguous_layout() {
        // file order (f2, f1) with f1 in group 1 and f2 in group 2
        let f = write_tmp("f2,y,f1\n10,0,1\n20,0,2\n");
        let map = GroupMap::Explicit(vec![("f1".into(), 1), ("f2".into(), 2)]);
        let loaded = load_csv(f.path(), "y", &map).unwrap();
        assert_eq!(loaded.feature_names, vec!["f1".to_string(), "f2".to_string()]);
        assert_eq!(loaded.dataset.x()[(0, 0)], 1.0);
        assert_eq!(loaded.dataset.x()[(0, 1)], 10.0);
        assert_eq!(loaded.group_ids, vec![1, 2]);
    }

    #[test]
    fn bad_cells_are_rejected_with_row_diagnostics() {
        let f = write_tmp("f1,y\n1,2\nfoo,3\n");
        let map = GroupMap::EqualBlocks(1);
        let err = load_csv(f.path(), "y", &map).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("f1"), "{msg}");

        let f = write_tmp("f1,y\ninf,3\n");
        let err = load_csv(f.path(), "y", &map).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn empty_and_ragged_files_fail() {
        let f = write_tmp("f1,y\n");
        let map = GroupMap::EqualBlocks(1);
        assert!(load_csv(f.path(), "y", &map).is_err());

        let f = write_tmp("f1,f2,y\n1,2,3\n4,5\n");
        let map = GroupMap::EqualBlocks(2);
        assert!(load_csv(f.path(), "y", &map).is_err());
    }

    #[test]
    fn unmapped_feature_is_an_error() {
        let f = write_tmp("f1,f2,y\n1,2,3\n");
        let map = GroupMap::Explicit(vec![("f1".into(), 1)]);
        let err = load_csv(f.path(), "y", &map).unwrap_err();
        assert!(err.to_string().contains("f2"));
    }

    #[test]
    fn group_map_file_roundtrip() {
        let f = write_tmp("feature,group_id\nf1,2\nf2,1\n");
        let pairs = load_group_map(f.path()).unwrap();
        assert_eq!(pairs, vec![("f1".to_string(), 2), ("f2".to_string(), 1)]);
    }
}
