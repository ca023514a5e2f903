//! LibSVM text format: `label idx:val idx:val ...` with 1-based increasing indices.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;

use crate::error::{Result, SegaError};
use crate::rng;
use crate::scalar::Real;

/// Parsed dataset: dense m×n feature matrix and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub features: DMatrix<T>,
    pub labels: DVector<T>,
}

/// Parser options.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Minimum number of columns; the maximum index seen wins if larger.
    pub n: Option<usize>,
    /// Keep at most this many rows, chosen uniformly with `subsample_seed`.
    pub max_rows: Option<usize>,
    pub subsample_seed: u64,
    /// Map two-valued labels to {−1, +1} (smaller → −1).
    pub binarize: bool,
}

struct Row {
    label: f64,
    entries: Vec<(usize, f64)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> SegaError {
    SegaError::Parse { line, message: message.into() }
}

fn parse_line(text: &str, line: usize) -> Result<Option<Row>> {
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().expect("nonempty body has a token");
    let label: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid label '{label_tok}'")))?;
    if !label.is_finite() {
        return Err(parse_err(line, "label is not finite"));
    }
    let mut entries = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected idx:val, found '{tok}'")))?;
        let idx: usize = idx.parse().map_err(|_| parse_err(line, format!("invalid index '{idx}'")))?;
        if idx == 0 {
            return Err(parse_err(line, "indices are 1-based"));
        }
        if idx <= last {
            return Err(parse_err(line, format!("indices not increasing ({idx} after {last})")));
        }
        let val: f64 = val.parse().map_err(|_| parse_err(line, format!("invalid value '{val}'")))?;
        if !val.is_finite() {
            return Err(parse_err(line, "value is not finite"));
        }
        last = idx;
        entries.push((idx - 1, val));
    }
    Ok(Some(Row { label, entries }))
}

/// Parses a LibSVM stream.
pub fn parse_libsvm<T: Real, R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Dataset<T>> {
    let mut rows = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(row) = parse_line(&line, k + 1)? {
            rows.push(row);
        }
    }
    if let Some(cap) = opts.max_rows {
        if rows.len() > cap {
            let mut r = rng::stream(opts.subsample_seed, rng::STREAM_DATA);
            let mut keep = sample(&mut r, rows.len(), cap).into_vec();
            keep.sort_unstable();
            let mut it = rows.into_iter().enumerate();
            rows = keep
                .into_iter()
                .map(|want| loop {
                    let (i, row) = it.next().expect("indices are in range");
                    if i == want {
                        break row;
                    }
                })
                .collect();
        }
    }
    let inferred = rows.iter().filter_map(|r| r.entries.last().map(|(i, _)| i + 1)).max().unwrap_or(0);
    let n = inferred.max(opts.n.unwrap_or(0));
    let mut features = DMatrix::zeros(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in &row.entries {
            features[(i, j)] = T::lit(v);
        }
    }
    let mut labels: Vec<f64> = rows.iter().map(|r| r.label).collect();
    if opts.binarize {
        binarize(&mut labels);
    }
    Ok(Dataset { features, labels: DVector::from_iterator(labels.len(), labels.into_iter().map(T::lit)) })
}

/// Convenience wrapper over a string.
pub fn parse_libsvm_str<T: Real>(text: &str, opts: &ParseOptions) -> Result<Dataset<T>> {
    parse_libsvm(text.as_bytes(), opts)
}

fn binarize(labels: &mut [f64]) {
    let mut distinct: Vec<f64> = labels.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite labels"));
    distinct.dedup();
    if distinct.len() == 2 {
        let lo = distinct[0];
        for l in labels.iter_mut() {
            *l = if *l == lo { -1.0 } else { 1.0 };
        }
    }
}

/// Writes the nonzero entries of each row in LibSVM format.
pub fn write_libsvm<T: Real>(data: &Dataset<T>) -> String {
    let mut out = String::new();
    for i in 0..data.features.nrows() {
        let _ = write!(out, "{}", data.labels[i].to_f64_lossy());
        for j in 0..data.features.ncols() {
            let v = data.features[(i, j)];
            if v != T::zero() {
                let _ = write!(out, " {}:{}", j + 1, v.to_f64_lossy());
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn parse(text: &str) -> Result<Dataset<f64>> {
        parse_libsvm_str(text, &ParseOptions { binarize: true, ..Default::default() })
    }

    #[test]
    fn basic_line() {
        let d = parse("1 1:0.5 3:-2").unwrap();
        assert_eq!(d.labels, dvector![1.0]);
        assert_eq!(d.features.row(0).transpose(), dvector![0.5, 0.0, -2.0]);
    }

    #[test]
    fn empty_features() {
        let d = parse("-1\n1 2:1").unwrap();
        assert_eq!(d.features.row(0).transpose(), dvector![0.0, 0.0]);
        assert_eq!(d.labels, dvector![-1.0, 1.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("1 1:1\n# comment\n1 2:1 1:1") {
            Err(SegaError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("not increasing"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("x 1:1"), Err(SegaError::Parse { line: 1, .. })));
        assert!(matches!(parse("1 0:1"), Err(SegaError::Parse { .. })));
        assert!(matches!(parse("1 1:abc"), Err(SegaError::Parse { .. })));
        assert!(matches!(parse("1 1"), Err(SegaError::Parse { .. })));
    }

    #[test]
    fn binary_labels_are_mapped() {
        let d = parse("0 1:1\n1 1:2\n0 1:3").unwrap();
        assert_eq!(d.labels, dvector![-1.0, 1.0, -1.0]);
    }

    #[test]
    fn subsampling_is_seeded() {
        let text: String = (0..50).map(|i| format!("1 1:{i}\n")).collect();
        let opts = ParseOptions { max_rows: Some(10), subsample_seed: 4, ..Default::default() };
        let a = parse_libsvm_str::<f64>(&text, &opts).unwrap();
        let b = parse_libsvm_str::<f64>(&text, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features.nrows(), 10);
    }
}
