//! CSV ingestion for the statistics commands.
//!
//! Three header-named formats:
//! - ensemble table: `predictor_id, group, <metric>...`, empty cells allowed;
//! - outcomes: `example_id, stratum, <predictor>...` with 0/1 cells;
//! - embeddings: `token, <d float columns>`.

use super::{EnsembleTable, StatsError, StratifiedOutcomes};
use std::collections::BTreeMap;
use std::io::Read;

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader)
}

fn bad(msg: impl Into<String>) -> StatsError {
    StatsError::Csv(msg.into())
}

/// Parse a predictor/group/metrics table.
pub fn read_table<R: Read>(reader: R) -> Result<EnsembleTable, StatsError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "predictor_id" || cols[1] != "group" {
        return Err(bad("expected header: predictor_id, group, <metric columns>"));
    }
    let metric_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut predictor_ids = Vec::new();
    let mut groups = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); metric_names.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != cols.len() {
            return Err(bad(format!("row {}: expected {} fields, got {}", line + 2, cols.len(), record.len())));
        }
        predictor_ids.push(record[0].to_string());
        groups.push(record[1].to_string());
        for (m, field) in record.iter().skip(2).enumerate() {
            if field.is_empty() {
                values[m].push(None);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| bad(format!("row {}: '{field}' is not a number", line + 2)))?;
                values[m].push(Some(v));
            }
        }
    }
    if predictor_ids.is_empty() {
        return Err(bad("table has no data rows"));
    }
    EnsembleTable::new(predictor_ids, groups, metric_names, values)
}

/// Parse a stratified outcomes file (one 0/1 column per predictor).
pub fn read_outcomes<R: Read>(reader: R) -> Result<StratifiedOutcomes, StatsError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "example_id" || cols[1] != "stratum" {
        return Err(bad("expected header: example_id, stratum, <predictor columns>"));
    }
    let predictor_ids: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut stratum = Vec::new();
    let mut correct: Vec<Vec<bool>> = vec![Vec::new(); predictor_ids.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != cols.len() {
            return Err(bad(format!("row {}: expected {} fields, got {}", line + 2, cols.len(), record.len())));
        }
        stratum.push(record[1].to_string());
        for (p, field) in record.iter().skip(2).enumerate() {
            let bit = match field {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("row {}: expected 0/1, got '{other}'", line + 2))),
            };
            correct[p].push(bit);
        }
    }
    if stratum.is_empty() {
        return Err(bad("outcomes file has no data rows"));
    }
    Ok(StratifiedOutcomes { predictor_ids, correct, stratum })
}

/// Parse an embeddings file: token plus d float columns.
pub fn read_embeddings<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>, StatsError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() < 2 || &headers[0] != "token" {
        return Err(bad("expected header: token, <float columns>"));
    }
    let dim = headers.len() - 1;
    let mut out = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(bad(format!("row {}: expected {} fields, got {}", line + 2, dim + 1, record.len())));
        }
        let token = record[0].to_string();
        let mut vec = Vec::with_capacity(dim);
        for field in record.iter().skip(1) {
            vec.push(
                field
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: '{field}' is not a number", line + 2)))?,
            );
        }
        out.insert(token, vec);
    }
    if out.is_empty() {
        return Err(bad("embeddings file has no data rows"));
    }
    Ok(out)
}

/// Look up a comma-separated token list in an embedding map.
pub fn lookup_tokens(
    embeddings: &BTreeMap<String, Vec<f64>>,
    tokens: &str,
) -> Result<Vec<Vec<f64>>, StatsError> {
    tokens
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            embeddings
                .get(t)
                .cloned()
                .ok_or_else(|| bad(format!("token '{t}' not found in embeddings file")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_table_with_missing_cells() {
        let csv = "predictor_id,group,acc,stress\np0,s1,0.9,0.5\np1,s1,0.91,\np2,s2,0.89,0.4\n";
        let t = read_table(csv.as_bytes()).unwrap();
        assert_eq!(t.predictor_ids.len(), 3);
        let (rows, dropped) = t.metric_by_group("stress").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn reads_outcomes() {
        let csv = "example_id,stratum,p0,p1\ne0,a,1,0\ne1,b,0,0\ne2,a,1,1\n";
        let o = read_outcomes(csv.as_bytes()).unwrap();
        assert_eq!(o.n_predictors(), 2);
        assert_eq!(o.n_examples(), 3);
        assert_eq!(o.correct[0], vec![true, false, true]);
    }

    #[test]
    fn reads_embeddings_and_looks_up_tokens() {
        let csv = "token,d0,d1\ncat,1.0,0.0\ndog,0.5,0.5\n";
        let e = read_embeddings(csv.as_bytes()).unwrap();
        let sets = lookup_tokens(&e, "cat, dog").unwrap();
        assert_eq!(sets.len(), 2);
        assert!(lookup_tokens(&e, "bird").is_err());
    }

    #[test]
    fn rejects_malformed_headers() {
        assert!(read_table("id,group,m\na,b,1\n".as_bytes()).is_err());
        assert!(read_outcomes("example_id,strat,p0\ne,a,1\n".as_bytes()).is_err());
        assert!(read_outcomes("example_id,stratum,p0\ne,a,2\n".as_bytes()).is_err());
    }
}
