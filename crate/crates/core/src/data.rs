//! Audit data model: score scale, subject records, CSV loading and group
//! partitioning.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min: f64,
    pub max: f64,
    pub higher_is_better: bool,
}

impl ScoreScale {
    pub fn new(min: f64, max: f64, higher_is_better: bool) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(AuditError::InvalidScale { min, max });
        }
        Ok(Self { min, max, higher_is_better })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.min).min(self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

impl Default for ScoreScale {
    fn default() -> Self {
        Self { min: 1.0, max: 7.0, higher_is_better: true }
    }
}

/// Names of the CSV columns carrying each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub subject: String,
    pub group: String,
    pub truth: String,
    pub pred: String,
    pub rater_prefix: String,
    pub feature_prefix: String,
    /// Name of the construct the scores measure; not a column.
    pub construct: String,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            subject: "subject_id".into(),
            group: "group".into(),
            truth: "y_true".into(),
            pred: "y_pred".into(),
            rater_prefix: "rater_".into(),
            feature_prefix: "f_".into(),
            construct: "construct".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub group: String,
    pub y_true: f64,
    pub y_pred: f64,
    /// One slot per rater column, in table order; `None` for an empty cell.
    pub ratings: Vec<Option<f64>>,
    /// One slot per feature column, in table order.
    pub features: Vec<Option<f64>>,
}

/// Validated, immutable table of subjects for one construct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTable {
    pub records: Vec<SubjectRecord>,
    pub scale: ScoreScale,
    pub roles: ColumnRoles,
    pub rater_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl AuditTable {
    /// Builds a table from already-parsed records, enforcing the same
    /// invariants as [`load_audit_table`].
    pub fn new(
        records: Vec<SubjectRecord>,
        scale: ScoreScale,
        roles: ColumnRoles,
        rater_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i as u64 + 2;
            if !seen.insert(r.subject_id.as_str()) {
                return Err(AuditError::DuplicateSubjectId(r.subject_id.clone()));
            }
            for (col, v) in [(&roles.truth, r.y_true), (&roles.pred, r.y_pred)] {
                if !scale.contains(v) {
                    return Err(AuditError::OutOfScale {
                        row,
                        column: col.clone(),
                        value: v,
                        min: scale.min,
                        max: scale.max,
                    });
                }
            }
            if r.ratings.len() != rater_names.len() || r.features.len() != feature_names.len() {
                return Err(AuditError::LengthMismatch(format!(
                    "subject `{}` has a column set different from the table",
                    r.subject_id
                )));
            }
        }
        Ok(Self { records, scale, roles, rater_names, feature_names })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn construct_name(&self) -> &str {
        &self.roles.construct
    }

    pub fn group_column_name(&self) -> &str {
        &self.roles.group
    }

    pub fn y_true(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_true).collect()
    }

    pub fn y_pred(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_pred).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Distinct group labels in first-appearance order.
    pub fn group_labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.group.as_str()))
            .map(|r| r.group.clone())
            .collect()
    }

    /// Writes the table in the same CSV layout [`load_audit_table`] reads.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            self.roles.subject.clone(),
            self.roles.group.clone(),
            self.roles.truth.clone(),
            self.roles.pred.clone(),
        ];
        header.extend(self.rater_names.iter().cloned());
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![
                r.subject_id.clone(),
                r.group.clone(),
                r.y_true.to_string(),
                r.y_pred.to_string(),
            ];
            row.extend(r.ratings.iter().map(opt));
            row.extend(r.features.iter().map(opt));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| AuditError::Csv(e.to_string()))
    }
}

fn parse_score(raw: &str, row: u64, column: &str) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(AuditError::MissingScore { row, column: column.to_string() });
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(AuditError::NonNumericScore {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn parse_optional(raw: &str, row: u64, column: &str) -> Result<Option<f64>> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_score(raw, row, column).map(Some)
    }
}

/// Loads and validates an RFC 4180 CSV stream.
///
/// Rater columns are those whose header starts with `roles.rater_prefix`,
/// feature columns those starting with `roles.feature_prefix`. Other
/// columns are ignored. Rows are numbered by their line in the file, the
/// header being line 1.
pub fn load_audit_table<R: Read>(
    source: R,
    roles: &ColumnRoles,
    scale: ScoreScale,
) -> Result<AuditTable> {
    ScoreScale::new(scale.min, scale.max, scale.higher_is_better)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AuditError::MissingColumn(name.to_string()))
    };
    let subject_col = find(&roles.subject)?;
    let group_col = find(&roles.group)?;
    let truth_col = find(&roles.truth)?;
    let pred_col = find(&roles.pred)?;
    let role_cols = [subject_col, group_col, truth_col, pred_col];

    let prefixed = |prefix: &str| -> Vec<(usize, String)> {
        if prefix.is_empty() {
            return Vec::new();
        }
        headers
            .iter()
            .enumerate()
            .filter(|(i, h)| h.starts_with(prefix) && !role_cols.contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .collect()
    };
    let rater_cols = prefixed(&roles.rater_prefix);
    let feature_cols: Vec<_> = prefixed(&roles.feature_prefix)
        .into_iter()
        .filter(|(i, _)| !rater_cols.iter().any(|(j, _)| j == i))
        .collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let subject_id = field(subject_col).to_string();
        if !seen.insert(subject_id.clone()) {
            return Err(AuditError::DuplicateSubjectId(subject_id));
        }
        let y_true = parse_score(field(truth_col), row, &roles.truth)?;
        let y_pred = parse_score(field(pred_col), row, &roles.pred)?;
        for (col, v) in [(&roles.truth, y_true), (&roles.pred, y_pred)] {
            if !scale.contains(v) {
                return Err(AuditError::OutOfScale {
                    row,
                    column: col.clone(),
                    value: v,
                    min: scale.min,
                    max: scale.max,
                });
            }
        }
        let ratings = rater_cols
            .iter()
            .map(|(i, name)| parse_optional(field(*i), row, name))
            .collect::<Result<Vec<_>>>()?;
        let features = feature_cols
            .iter()
            .map(|(i, name)| parse_optional(field(*i), row, name))
            .collect::<Result<Vec<_>>>()?;
        records.push(SubjectRecord {
            subject_id,
            group: field(group_col).to_string(),
            y_true,
            y_pred,
            ratings,
            features,
        });
    }

    Ok(AuditTable {
        records,
        scale,
        roles: roles.clone(),
        rater_names: rater_cols.into_iter().map(|(_, n)| n).collect(),
        feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
    })
}

/// Ordered pair of groups with their row indices.
///
/// Rows carrying any other label are left out and counted in `excluded`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub group_a_label: String,
    pub group_b_label: String,
    pub idx_a: Vec<usize>,
    pub idx_b: Vec<usize>,
    pub excluded: usize,
}

impl GroupPartition {
    pub fn n_a(&self) -> usize {
        self.idx_a.len()
    }

    pub fn n_b(&self) -> usize {
        self.idx_b.len()
    }

    /// Included rows in ascending row order.
    pub fn included(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.idx_a.iter().chain(&self.idx_b).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn swapped(&self) -> Self {
        Self {
            group_a_label: self.group_b_label.clone(),
            group_b_label: self.group_a_label.clone(),
            idx_a: self.idx_b.clone(),
            idx_b: self.idx_a.clone(),
            excluded: self.excluded,
        }
    }

    pub fn label(&self, is_a: bool) -> &str {
        if is_a {
            &self.group_a_label
        } else {
            &self.group_b_label
        }
    }
}

/// Picks values at the given row indices.
pub(crate) fn gather(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

pub fn partition(table: &AuditTable, group_a: &str, group_b: &str) -> Result<GroupPartition> {
    if group_a == group_b {
        return Err(AuditError::IdenticalGroups(group_a.to_string()));
    }
    let mut idx_a = Vec::new();
    let mut idx_b = Vec::new();
    let mut excluded = 0;
    for (i, r) in table.records.iter().enumerate() {
        if r.group == group_a {
            idx_a.push(i);
        } else if r.group == group_b {
            idx_b.push(i);
        } else {
            excluded += 1;
        }
    }
    if idx_a.is_empty() {
        return Err(AuditError::UnknownGroupLabel(group_a.to_string()));
    }
    if idx_b.is_empty() {
        return Err(AuditError::UnknownGroupLabel(group_b.to_string()));
    }
    Ok(GroupPartition {
        group_a_label: group_a.to_string(),
        group_b_label: group_b.to_string(),
        idx_a,
        idx_b,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_ROWS: &str = "id,gender,true,pred\n1,w,1.0,2.0\n2,w,3.5,3\n3,m,7,6.5\n4,m,4,4\n";

    fn roles() -> ColumnRoles {
        ColumnRoles {
            subject: "id".into(),
            group: "gender".into(),
            truth: "true".into(),
            pred: "pred".into(),
            ..ColumnRoles::default()
        }
    }

    fn load(src: &str) -> Result<AuditTable> {
        load_audit_table(src.as_bytes(), &roles(), ScoreScale::default())
    }

    #[test]
    fn loads_four_rows() {
        let t = load(FOUR_ROWS).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.y_true(), vec![1.0, 3.5, 7.0, 4.0]);
        assert_eq!(t.records[2].group, "m");
        assert!(t.rater_names.is_empty());
    }

    #[test]
    fn non_numeric_score_names_row_and_column() {
        let err = load("id,gender,true,pred\n1,w,1,2\n2,w,abc,3\n").unwrap_err();
        assert_eq!(
            err,
            AuditError::NonNumericScore { row: 3, column: "true".into(), value: "abc".into() }
        );
    }

    #[test]
    fn out_of_scale_rejected() {
        let err = load("id,gender,true,pred\n1,w,9.0,2\n").unwrap_err();
        assert!(matches!(err, AuditError::OutOfScale { row: 2, value, .. } if value == 9.0));
    }

    #[test]
    fn missing_column_and_duplicates() {
        let err = load("id,gender,true\n1,w,1\n").unwrap_err();
        assert_eq!(err, AuditError::MissingColumn("pred".into()));
        let err = load("id,gender,true,pred\n1,w,1,2\n1,m,1,2\n").unwrap_err();
        assert_eq!(err, AuditError::DuplicateSubjectId("1".into()));
        let err = load("id,gender,true,pred\n1,w,,2\n").unwrap_err();
        assert!(matches!(err, AuditError::MissingScore { .. }));
    }

    #[test]
    fn rater_and_feature_columns() {
        let src = "id,gender,true,pred,rater_1,rater_2,f_pitch,note\n1,w,2,3,2,,0.5,x\n2,m,4,4,4,5,,y\n";
        let t = load(src).unwrap();
        assert_eq!(t.rater_names, vec!["rater_1", "rater_2"]);
        assert_eq!(t.feature_names, vec!["f_pitch"]);
        assert_eq!(t.records[0].ratings, vec![Some(2.0), None]);
        assert_eq!(t.records[1].features, vec![None]);
    }

    #[test]
    fn labels_are_case_sensitive() {
        let t = load("id,gender,true,pred\n1,w,1,2\n2,W,1,2\n").unwrap();
        assert_eq!(t.group_labels(), vec!["w", "W"]);
    }

    fn table_with_groups(groups: &[&str]) -> AuditTable {
        let mut src = String::from("id,gender,true,pred\n");
        for (i, g) in groups.iter().enumerate() {
            src.push_str(&format!("{i},{g},4,4\n"));
        }
        load(&src).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = partition(&table_with_groups(&["w", "w", "m", "m"]), "w", "m").unwrap();
        assert_eq!((p.idx_a.clone(), p.idx_b.clone(), p.excluded), (vec![0, 1], vec![2, 3], 0));

        let p = partition(&table_with_groups(&["w", "m", "x"]), "w", "m").unwrap();
        assert_eq!((p.n_a(), p.n_b(), p.excluded), (1, 1, 1));

        let err = partition(&table_with_groups(&["w", "w"]), "w", "m").unwrap_err();
        assert_eq!(err, AuditError::UnknownGroupLabel("m".into()));
    }

    #[test]
    fn partition_swap_symmetry() {
        let t = table_with_groups(&["w", "m", "x", "m", "w", "w"]);
        let p = partition(&t, "w", "m").unwrap();
        let q = partition(&t, "m", "w").unwrap();
        assert_eq!(p.swapped(), q);
    }

    #[test]
    fn csv_round_trip() {
        let src = "id,gender,true,pred,rater_1,rater_2,f_pitch\n1,w,2.25,3,2,,0.1\n2,m,4,4.125,4,5,-3e-5\n";
        let t = load(src).unwrap();
        let again = load(&t.to_csv_string().unwrap()).unwrap();
        assert_eq!(t, again);
    }
}
