use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Seven annotator scores on the integer scale `[-3, 3]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnnotationRecord {
    scores: [i8; 7],
}

impl AnnotationRecord {
    pub fn new(scores: [i8; 7]) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !(-3..=3).contains(*s)) {
            return Err(Error::Validation(format!("annotation score {bad} outside [-3, 3]")));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> [i8; 7] {
        self.scores
    }
}

/// Drops one highest and one lowest score, averages the other five, rescales to
/// `[-1, 1]` and rounds to the nearest multiple of 0.2 (ties away from zero).
pub fn aggregate_annotations(record: &AnnotationRecord) -> f64 {
    let mut sorted = record.scores;
    sorted.sort_unstable();
    let trimmed: i32 = sorted[1..6].iter().map(|&s| i32::from(s)).sum();
    // mean / 3 * 5 == trimmed / 3 grid steps
    let steps = (f64::from(trimmed) / 3.0).round();
    steps / 5.0 + 0.0
}

/// Reads `id,s1,…,s7` rows and writes `id,label` rows. A leading `id,...` header is
/// skipped. Errors name the 1-based row number.
pub fn aggregate_csv(input: impl Read, output: impl Write) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut writer = csv::Writer::from_writer(output);
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        if row == 1 && record.get(0) == Some("id") {
            continue;
        }
        if record.len() != 8 {
            return Err(Error::Format(format!(
                "row {row}: expected an id and 7 scores, found {} fields",
                record.len()
            )));
        }
        let mut scores = [0i8; 7];
        for (slot, field) in scores.iter_mut().zip(record.iter().skip(1)) {
            *slot = field
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: score `{field}` is not an integer")))?;
        }
        let record_scores = AnnotationRecord::new(scores).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("row {row}: {msg}")),
            other => other,
        })?;
        let label = aggregate_annotations(&record_scores);
        writer.write_record([&record[0], &format!("{label:.1}")])?;
        rows += 1;
    }
    writer
        .flush()
        .map_err(|e| Error::io("aggregated labels", e))?;
    Ok(rows)
}
