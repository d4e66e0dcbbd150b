//! CSV ingestion: one-hot encoding of binary/categorical/continuous columns
//! and background selection.
//!
//! Feature index 0 is the first CSV column's first encoded bit. Categorical
//! levels are ordered by first appearance; continuous columns are binned
//! into equal-population quantile bins (default 4) whose edges persist in
//! the encoding report so queries encode identically at explain time.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shap::BackgroundDataset;
use crate::spectrum::PointVector;
use crate::synth::seeded_rng;

pub const DEFAULT_QUANTILE_BINS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Binary,
    Categorical,
    Continuous {
        #[serde(default)]
        bins: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Column schema, stored as a JSON array of
/// `{"name", "kind": "binary"|"categorical"|"continuous", "bins"?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema(pub Vec<SchemaColumn>);

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::schema("", e.to_string()))?;
        let arr = value
            .as_array()
            .ok_or_else(|| Error::schema("", "expected a JSON array"))?;
        let mut columns = Vec::with_capacity(arr.len());
        for (i, col) in arr.iter().enumerate() {
            let pointer = format!("/{i}");
            let obj = col
                .as_object()
                .ok_or_else(|| Error::schema(&pointer, "expected an object"))?;
            let name = obj
                .get("name")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::schema(format!("{pointer}/name"), "expected a string"))?
                .to_string();
            let kind = obj
                .get("kind")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::schema(format!("{pointer}/kind"), "expected a string"))?;
            let kind = match kind {
                "binary" => ColumnKind::Binary,
                "categorical" => ColumnKind::Categorical,
                "continuous" => {
                    let bins = match obj.get("bins") {
                        None => None,
                        Some(b) => Some(b.as_u64().filter(|&b| b >= 2).ok_or_else(|| {
                            Error::schema(format!("{pointer}/bins"), "expected an integer >= 2")
                        })? as usize),
                    };
                    ColumnKind::Continuous { bins }
                }
                other => {
                    return Err(Error::schema(
                        format!("{pointer}/kind"),
                        format!("unknown kind {other:?}"),
                    ))
                }
            };
            columns.push(SchemaColumn { name, kind });
        }
        Ok(Schema(columns))
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn column(&self, name: &str) -> Option<&SchemaColumn> {
        self.0.iter().find(|c| c.name == name)
    }
}

/// One source column's slice of the encoded vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedGroup {
    pub name: String,
    pub kind: String,
    /// First encoded feature index of this group.
    pub start: usize,
    pub width: usize,
    /// Categorical: level string per encoded column, in first-appearance
    /// order (appended unknown levels included).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Continuous: upper-inclusive bin boundaries; `bin(v) = #{e : v > e}`,
    /// ties to the lower bin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<f64>,
}

/// Original-to-encoded column map, persisted next to outputs so queries
/// encode exactly like the data they are explained against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingReport {
    pub n: usize,
    pub groups: Vec<EncodedGroup>,
}

impl EncodingReport {
    pub fn from_file(path: &Path) -> Result<EncodingReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Encoded rows plus the report that produced them.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub rows: Vec<PointVector>,
    pub report: EncodingReport,
    pub warnings: Vec<String>,
}

impl TabularDataset {
    pub fn n(&self) -> usize {
        self.report.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

struct RawTable {
    /// Column-major string cells, in CSV header order.
    columns: Vec<(String, Vec<String>)>,
    rows: usize,
}

fn read_raw(path: &Path, schema: &Schema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    for h in &headers {
        if schema.column(h).is_none() {
            return Err(Error::schema(
                format!("/columns/{h}"),
                "column missing from schema",
            ));
        }
    }
    let mut columns: Vec<(String, Vec<String>)> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        for (c, cell) in record.iter().enumerate() {
            columns[c].1.push(cell.to_string());
        }
        rows += 1;
    }
    Ok(RawTable { columns, rows })
}

/// Loads, validates and one-hot encodes a CSV with a header row. The schema
/// must cover every column; malformed numeric cells fail with their line
/// number.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<TabularDataset> {
    let raw = read_raw(path, schema)?;
    let mut groups: Vec<EncodedGroup> = Vec::with_capacity(raw.columns.len());
    let mut start = 0usize;

    for (name, cells) in &raw.columns {
        let col = schema.column(name).expect("checked in read_raw");
        let group = match &col.kind {
            ColumnKind::Binary => EncodedGroup {
                name: name.clone(),
                kind: "binary".into(),
                start,
                width: 1,
                levels: vec![],
                edges: vec![],
            },
            ColumnKind::Categorical => {
                let mut levels: Vec<String> = Vec::new();
                for cell in cells {
                    if !levels.iter().any(|l| l == cell) {
                        levels.push(cell.clone());
                    }
                }
                EncodedGroup {
                    name: name.clone(),
                    kind: "categorical".into(),
                    start,
                    width: levels.len(),
                    levels,
                    edges: vec![],
                }
            }
            ColumnKind::Continuous { bins } => {
                let bins = bins.unwrap_or(DEFAULT_QUANTILE_BINS);
                let mut values = Vec::with_capacity(cells.len());
                for (r, cell) in cells.iter().enumerate() {
                    let v: f64 = cell.parse().map_err(|_| Error::MalformedCell {
                        line: r + 2,
                        column: name.clone(),
                        value: cell.clone(),
                    })?;
                    values.push(v);
                }
                EncodedGroup {
                    name: name.clone(),
                    kind: "continuous".into(),
                    start,
                    width: bins,
                    levels: vec![],
                    edges: quantile_edges(&values, bins),
                }
            }
        };
        start += group.width;
        groups.push(group);
    }

    let report = EncodingReport { n: start, groups };
    let mut warnings = Vec::new();
    let rows = encode_raw(&raw, schema, &report, &mut warnings)?;
    Ok(TabularDataset {
        rows,
        report,
        warnings,
    })
}

/// Encodes a CSV against an existing report (the query-time path). Unknown
/// categorical levels get a fresh one-hot column appended at the end of the
/// encoding, with a warning; the resulting width mismatch is then caught by
/// the dimension checks downstream.
pub fn encode_csv_with_report(
    path: &Path,
    schema: &Schema,
    report: &EncodingReport,
) -> Result<TabularDataset> {
    let raw = read_raw(path, schema)?;
    let mut extended = report.clone();
    let mut warnings = Vec::new();

    // Pre-scan for unknown categorical levels so every row encodes at the
    // same width.
    for (name, cells) in &raw.columns {
        let Some(group_idx) = extended.groups.iter().position(|g| &g.name == name) else {
            return Err(Error::schema(
                format!("/columns/{name}"),
                "column missing from encoding report",
            ));
        };
        if extended.groups[group_idx].kind != "categorical" {
            continue;
        }
        for cell in cells {
            let known = extended.groups[group_idx].levels.iter().any(|l| l == cell);
            if !known {
                let appended_at = extended.n;
                warnings.push(format!(
                    "unknown level {cell:?} in column {name:?}; appended encoded column {appended_at}"
                ));
                extended.groups[group_idx].levels.push(cell.clone());
                extended.n += 1;
            }
        }
    }

    let rows = encode_raw(&raw, schema, &extended, &mut warnings)?;
    Ok(TabularDataset {
        rows,
        report: extended,
        warnings,
    })
}

fn encode_raw(
    raw: &RawTable,
    schema: &Schema,
    report: &EncodingReport,
    _warnings: &mut [String],
) -> Result<Vec<PointVector>> {
    let mut rows = Vec::with_capacity(raw.rows);
    // Appended unknown-level columns live past the contiguous group ranges,
    // in report order.
    let mut appended_of: Vec<Vec<usize>> = Vec::new();
    let mut appended_cursor = report
        .groups
        .iter()
        .map(|g| g.start + g.width)
        .max()
        .unwrap_or(0);
    for group in &report.groups {
        if group.kind == "categorical" && group.levels.len() > group.width {
            let extra = group.levels.len() - group.width;
            appended_of.push((appended_cursor..appended_cursor + extra).collect());
            appended_cursor += extra;
        } else {
            appended_of.push(vec![]);
        }
    }

    for r in 0..raw.rows {
        let mut bits = vec![0u8; report.n];
        for ((name, cells), (group, appended)) in raw
            .columns
            .iter()
            .zip(report.groups.iter().zip(&appended_of))
        {
            let cell = &cells[r];
            let col = schema.column(name).expect("checked in read_raw");
            match &col.kind {
                ColumnKind::Binary => match cell.as_str() {
                    "0" => {}
                    "1" => bits[group.start] = 1,
                    other => {
                        return Err(Error::MalformedCell {
                            line: r + 2,
                            column: name.clone(),
                            value: other.to_string(),
                        })
                    }
                },
                ColumnKind::Categorical => {
                    let level = group
                        .levels
                        .iter()
                        .position(|l| l == cell)
                        .expect("levels pre-scanned");
                    if level < group.width {
                        bits[group.start + level] = 1;
                    } else {
                        bits[appended[level - group.width]] = 1;
                    }
                }
                ColumnKind::Continuous { .. } => {
                    let v: f64 = cell.parse().map_err(|_| Error::MalformedCell {
                        line: r + 2,
                        column: name.clone(),
                        value: cell.clone(),
                    })?;
                    let bin = group.edges.iter().filter(|e| v > **e).count();
                    bits[group.start + bin.min(group.width - 1)] = 1;
                }
            }
        }
        rows.push(PointVector::from_bits(&bits)?);
    }
    Ok(rows)
}

/// Equal-population bin boundaries over the sorted values: edge `j` sits at
/// rank `ceil(j m / bins)`, duplicates collapsed. A value ties to the lower
/// bin.
fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() || bins < 2 {
        return vec![];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len();
    let mut edges = Vec::with_capacity(bins - 1);
    for j in 1..bins {
        let rank = (j * m).div_ceil(bins);
        let edge = sorted[rank.saturating_sub(1)];
        if edges.last() != Some(&edge) {
            edges.push(edge);
        }
    }
    edges
}

/// Inverse of the encoding for one row: binary columns give "0"/"1",
/// categorical columns their level, continuous columns "bin:I".
pub fn decode_row(report: &EncodingReport, row: &PointVector) -> Result<Vec<String>> {
    if row.n() != report.n {
        return Err(Error::dim("decode_row", report.n, row.n()));
    }
    let mut out = Vec::with_capacity(report.groups.len());
    for group in &report.groups {
        let hot: Vec<usize> = (0..group.width)
            .filter(|i| row.get(group.start + i))
            .collect();
        match group.kind.as_str() {
            "binary" => out.push(if hot.is_empty() { "0" } else { "1" }.to_string()),
            "categorical" => {
                if hot.len() != 1 {
                    return Err(Error::InvalidParameter {
                        name: "row",
                        message: format!(
                            "column {:?} has {} hot bits, expected 1",
                            group.name,
                            hot.len()
                        ),
                    });
                }
                out.push(group.levels[hot[0]].clone());
            }
            _ => {
                if hot.len() != 1 {
                    return Err(Error::InvalidParameter {
                        name: "row",
                        message: format!(
                            "column {:?} has {} hot bits, expected 1",
                            group.name,
                            hot.len()
                        ),
                    });
                }
                out.push(format!("bin:{}", hot[0]));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackgroundStrategy {
    FirstRows,
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct BackgroundSpec {
    pub strategy: BackgroundStrategy,
    pub size: usize,
}

/// Deterministic background selection: either the leading rows or a
/// Fisher-Yates draw keyed by the seed.
pub fn select_background(ds: &TabularDataset, spec: &BackgroundSpec) -> Result<BackgroundDataset> {
    if spec.size == 0 || spec.size > ds.len() {
        return Err(Error::InvalidParameter {
            name: "background size",
            message: format!("size {} outside 1..={}", spec.size, ds.len()),
        });
    }
    let rows: Vec<PointVector> = match &spec.strategy {
        BackgroundStrategy::FirstRows => ds.rows[..spec.size].to_vec(),
        BackgroundStrategy::Random { seed } => {
            let mut rng = seeded_rng(*seed);
            let mut indices: Vec<usize> = (0..ds.len()).collect();
            for j in 0..spec.size {
                let pick = rng.random_range(j..indices.len());
                indices.swap(j, pick);
            }
            indices[..spec.size]
                .iter()
                .map(|&i| ds.rows[i].clone())
                .collect()
        }
    };
    BackgroundDataset::new(ds.n(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_csv(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn schema(text: &str) -> Schema {
        Schema::from_json(text).unwrap()
    }

    #[test]
    fn binary_column_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "b.csv", "flag\n0\n1\n1\n");
        let s = schema(r#"[{"name": "flag", "kind": "binary"}]"#);
        let ds = load_csv(&path, &s).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.rows[0].bits(), vec![0]);
        assert_eq!(ds.rows[1].bits(), vec![1]);
    }

    #[test]
    fn categorical_levels_one_hot_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("site\n");
        for r in 0..28 {
            text.push_str(&format!("aa{}\n", r % 14));
        }
        let path = write_csv(&dir, "c.csv", &text);
        let s = schema(r#"[{"name": "site", "kind": "categorical"}]"#);
        let ds = load_csv(&path, &s).unwrap();
        assert_eq!(ds.n(), 14);
        for row in &ds.rows {
            assert_eq!(row.bits().iter().map(|b| *b as usize).sum::<usize>(), 1);
        }
        assert_eq!(ds.report.groups[0].levels[0], "aa0");
    }

    #[test]
    fn continuous_quantile_bins_hot_exactly_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("x\n");
        for v in [3.0, 1.0, 7.0, 5.0, 2.0, 8.0, 6.0, 4.0] {
            text.push_str(&format!("{v}\n"));
        }
        let path = write_csv(&dir, "q.csv", &text);
        let s = schema(r#"[{"name": "x", "kind": "continuous", "bins": 4}]"#);
        let ds = load_csv(&path, &s).unwrap();
        assert_eq!(ds.n(), 4);
        // 8 distinct values, 4 bins: 2 per bin.
        let mut per_bin = [0usize; 4];
        for row in &ds.rows {
            let hot: Vec<usize> = (0..4).filter(|&i| row.get(i)).collect();
            assert_eq!(hot.len(), 1);
            per_bin[hot[0]] += 1;
        }
        assert_eq!(per_bin, [2, 2, 2, 2]);
        // Ties go to the lower bin.
        assert_eq!(ds.report.groups[0].edges, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn malformed_numeric_cell_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "bad.csv", "x\n1.5\napple\n");
        let s = schema(r#"[{"name": "x", "kind": "continuous"}]"#);
        match load_csv(&path, &s).unwrap_err() {
            Error::MalformedCell { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_must_cover_all_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "extra.csv", "a,b\n0,1\n");
        let s = schema(r#"[{"name": "a", "kind": "binary"}]"#);
        assert!(matches!(
            load_csv(&path, &s),
            Err(Error::SchemaViolation { .. })
        ));
    }

    #[test]
    fn encode_decode_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "mix.csv",
            "flag,color,age\n1,red,10\n0,green,30\n1,red,20\n0,blue,40\n",
        );
        let s = schema(
            r#"[{"name": "flag", "kind": "binary"},
                {"name": "color", "kind": "categorical"},
                {"name": "age", "kind": "continuous", "bins": 2}]"#,
        );
        let ds = load_csv(&path, &s).unwrap();
        assert_eq!(ds.n(), 1 + 3 + 2);
        let decoded = decode_row(&ds.report, &ds.rows[1]).unwrap();
        assert_eq!(decoded, vec!["0", "green", "bin:1"]);
        let decoded = decode_row(&ds.report, &ds.rows[0]).unwrap();
        assert_eq!(decoded, vec!["1", "red", "bin:0"]);
    }

    #[test]
    fn unknown_level_appends_column_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_csv(&dir, "train.csv", "color\nred\ngreen\n");
        let s = schema(r#"[{"name": "color", "kind": "categorical"}]"#);
        let ds = load_csv(&data, &s).unwrap();
        assert_eq!(ds.n(), 2);

        let queries = write_csv(&dir, "queries.csv", "color\nred\npurple\n");
        let qs = encode_csv_with_report(&queries, &s, &ds.report).unwrap();
        assert_eq!(qs.n(), 3);
        assert_eq!(qs.warnings.len(), 1);
        assert!(qs.warnings[0].contains("purple"));
        assert_eq!(qs.rows[1].bits(), vec![0, 0, 1]);
    }

    #[test]
    fn background_selection_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("flag\n");
        for i in 0..120 {
            text.push_str(if i % 3 == 0 { "1\n" } else { "0\n" });
        }
        let path = write_csv(&dir, "rows.csv", &text);
        let s = schema(r#"[{"name": "flag", "kind": "binary"}]"#);
        let ds = load_csv(&path, &s).unwrap();

        let all = select_background(
            &ds,
            &BackgroundSpec {
                strategy: BackgroundStrategy::FirstRows,
                size: 120,
            },
        )
        .unwrap();
        assert_eq!(all.len(), 120);
        assert_eq!(all.points()[0].bits(), vec![1]);

        let spec = BackgroundSpec {
            strategy: BackgroundStrategy::Random { seed: 1 },
            size: 10,
        };
        let a = select_background(&ds, &spec).unwrap();
        let b = select_background(&ds, &spec).unwrap();
        assert_eq!(a.points(), b.points());

        assert!(matches!(
            select_background(
                &ds,
                &BackgroundSpec {
                    strategy: BackgroundStrategy::FirstRows,
                    size: 121
                }
            ),
            Err(Error::InvalidParameter { .. })
        ));
    }
}
