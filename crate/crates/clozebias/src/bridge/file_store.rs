use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clozebias_core::lm::{LogprobProvider, SentenceScore};
use clozebias_core::ProviderError;

use super::record::read_logprob_file;
use crate::error::{Error, Result};

/// Serves scores from a validated logprob file. All records must come from
/// one model.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    model_id: String,
    by_text: HashMap<String, SentenceScore>,
}

impl FileStore {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let scores = read_logprob_file(BufReader::new(file), path)?;
        Self::from_scores(path, scores)
    }

    pub fn from_scores(path: &Path, scores: Vec<SentenceScore>) -> Result<Self> {
        let mut model_id: Option<String> = None;
        let mut by_text = HashMap::with_capacity(scores.len());
        for s in scores {
            match &model_id {
                None => model_id = Some(s.model_id.clone()),
                Some(m) if *m != s.model_id => {
                    return Err(Error::Config(format!(
                        "{}: records from several models ({m:?}, {:?})",
                        path.display(),
                        s.model_id
                    )))
                }
                Some(_) => {}
            }
            if let Some(prev) = by_text.get(&s.text) {
                if *prev != s {
                    return Err(Error::Config(format!(
                        "{}: conflicting records for {:?}",
                        path.display(),
                        s.text
                    )));
                }
                continue;
            }
            by_text.insert(s.text.clone(), s);
        }
        Ok(Self {
            path: path.to_path_buf(),
            model_id: model_id.unwrap_or_default(),
            by_text,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }
}

impl LogprobProvider for FileStore {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, text: &str) -> std::result::Result<SentenceScore, ProviderError> {
        self.by_text
            .get(text)
            .cloned()
            .ok_or_else(|| ProviderError::MissingScore {
                sentence: text.to_string(),
            })
    }
}
