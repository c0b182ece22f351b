use std::io::{BufRead, Write};
use std::path::Path;

use clozebias_core::lm::{sentence_id, SentenceScore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a logprob file, and one element of an HTTP response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogprobRecord {
    pub sentence_id: String,
    pub model_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<Option<f64>>,
    pub token_offsets: Vec<[usize; 2]>,
}

impl From<SentenceScore> for LogprobRecord {
    fn from(s: SentenceScore) -> Self {
        Self {
            sentence_id: s.sentence_id,
            model_id: s.model_id,
            text: s.text,
            tokens: s.tokens,
            logprobs: s.logprobs,
            token_offsets: s.token_offsets.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

impl LogprobRecord {
    /// Checks the record invariants and the sentence id, returning the score.
    pub fn validate(self) -> clozebias_core::Result<SentenceScore> {
        let expected = sentence_id(&self.model_id, &self.text);
        if self.sentence_id != expected {
            return Err(clozebias_core::Error::Validation(format!(
                "sentence_id {} does not match {expected} for model {:?}",
                self.sentence_id, self.model_id
            )));
        }
        let score = SentenceScore {
            sentence_id: self.sentence_id,
            model_id: self.model_id,
            text: self.text,
            tokens: self.tokens,
            logprobs: self.logprobs,
            token_offsets: self.token_offsets.into_iter().map(|[a, b]| (a, b)).collect(),
        };
        score.validate()?;
        Ok(score)
    }
}

/// Parses and validates a single JSON record.
pub fn parse_record(line: &str) -> std::result::Result<SentenceScore, String> {
    let record: LogprobRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    record.validate().map_err(|e| e.to_string())
}

/// Reads a logprob file, validating every line. All problems are reported
/// together.
pub fn read_logprob_file<R: BufRead>(reader: R, path: &Path) -> Result<Vec<SentenceScore>> {
    let mut scores = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(s) => scores.push(s),
            Err(e) => issues.push(format!("line {}: {e}", idx + 1)),
        }
    }
    if issues.is_empty() {
        Ok(scores)
    } else {
        Err(Error::Lines {
            path: path.to_path_buf(),
            issues,
        })
    }
}

pub fn write_logprob_file<W: Write>(mut out: W, scores: &[SentenceScore]) -> std::io::Result<()> {
    for s in scores {
        let line = serde_json::to_string(&LogprobRecord::from(s.clone()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Request body of `POST /v1/logprobs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogprobRequest {
    pub model_id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: serde_json::Value,
    pub message: String,
}

/// Interprets an HTTP response: a 2xx status must carry an array of valid
/// records, anything else must carry the error envelope.
pub fn parse_http_response(status: u16, body: &str) -> std::result::Result<Vec<SentenceScore>, String> {
    if (200..300).contains(&status) {
        let records: Vec<LogprobRecord> =
            serde_json::from_str(body).map_err(|e| format!("malformed response body: {e}"))?;
        records
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.validate().map_err(|e| format!("record {i}: {e}")))
            .collect()
    } else {
        match serde_json::from_str::<ErrorEnvelope>(body) {
            Ok(env) => Err(format!("status {status}, code {}: {}", env.error.code, env.error.message)),
            Err(_) => Err(format!("status {status} without an error envelope: {}", body.trim())),
        }
    }
}

/// Checks a response against the wire format without interpreting it:
/// 2xx needs valid records, anything else a well-formed error envelope.
pub fn validate_http_response(status: u16, body: &str) -> std::result::Result<usize, String> {
    if (200..300).contains(&status) {
        return parse_http_response(status, body).map(|r| r.len());
    }
    serde_json::from_str::<ErrorEnvelope>(body)
        .map(|_| 0)
        .map_err(|e| format!("status {status}: not an error envelope: {e}"))
}

/// One line of the sentence manifest consumed by the exporter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLine {
    pub sentence_id: String,
    pub text: String,
}

pub fn read_manifest<R: BufRead>(reader: R, path: &Path) -> Result<Vec<ManifestLine>> {
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        lines.push(parsed);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clozebias_core::mock::MockLm;

    #[test]
    fn mock_records_validate() {
        let s = MockLm::default().score_text("The chef cooked for him.");
        let line = serde_json::to_string(&LogprobRecord::from(s.clone())).unwrap();
        assert_eq!(parse_record(&line).unwrap(), s);
    }

    #[test]
    fn rejects_wrong_id_and_unknown_fields() {
        let mut r = LogprobRecord::from(MockLm::default().score_text("a b"));
        r.sentence_id = "0000000000000000".into();
        assert!(r.validate().is_err());
        assert!(parse_record(r#"{"sentence_id":"x","model_id":"m","text":"a","tokens":["a"],"logprobs":[null],"token_offsets":[[0,1]],"extra":1}"#).is_err());
    }

    #[test]
    fn http_envelopes() {
        assert!(parse_http_response(200, "[]").unwrap().is_empty());
        let err = parse_http_response(400, r#"{"error":{"code":"bad_request","message":"texts missing"}}"#).unwrap_err();
        assert!(err.contains("texts missing"));
        assert!(parse_http_response(500, "oops").unwrap_err().contains("without an error envelope"));
        assert!(parse_http_response(200, "{}").is_err());
    }
}
