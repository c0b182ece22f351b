//! Text embedding file loader (word2vec text / GloVe).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use clozebias_core::embedding::{EmbeddingFormat, EmbeddingTable, EmbeddingTableBuilder};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Forces the layout instead of sniffing the first line.
    pub format: Option<EmbeddingFormat>,
    pub case_fold: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: None,
            case_fold: true,
        }
    }
}

fn header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let count = parts.next()?.parse().ok()?;
    let dim = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((count, dim))
}

pub fn load_embeddings(path: &Path, options: LoadOptions) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, options)
}

pub fn read_embeddings<R: BufRead>(reader: R, path: &Path, options: LoadOptions) -> Result<EmbeddingTable> {
    let format_err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut builder: Option<EmbeddingTableBuilder> = None;
    let mut format = options.format.unwrap_or(EmbeddingFormat::GloveText);
    let mut declared = None;
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n', ' ', '\t']);
        if line.is_empty() {
            continue;
        }
        if idx == 0 && options.format != Some(EmbeddingFormat::GloveText) {
            if let Some((count, dim)) = header(line) {
                if dim == 0 {
                    return Err(format_err(lineno, "header declares dimension 0".into()));
                }
                builder = Some(EmbeddingTableBuilder::new(dim, options.case_fold)?);
                declared = Some(count);
                format = EmbeddingFormat::Word2vecText;
                continue;
            }
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let word = fields.next().unwrap_or_default();
        values.clear();
        for field in fields {
            let v: f32 = field
                .parse()
                .map_err(|_| format_err(lineno, format!("cannot parse {field:?} as a number")))?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(format_err(lineno, format!("word {word:?} has no vector")));
        }
        let b = match &mut builder {
            Some(b) => b,
            None => builder.insert(EmbeddingTableBuilder::new(values.len(), options.case_fold)?),
        };
        if values.len() != b.dimension() {
            return Err(format_err(
                lineno,
                format!(
                    "dimension mismatch at line {lineno}: expected {}, found {}",
                    b.dimension(),
                    values.len()
                ),
            ));
        }
        b.insert(word, &values)?;
    }
    let builder = builder.ok_or_else(|| format_err(0, "empty embedding file".into()))?;
    let table = builder.build(path.display().to_string(), format);
    if table.is_empty() {
        return Err(format_err(0, "embedding file has a header but no vectors".into()));
    }
    if let Some(count) = declared {
        if count != table.len() + table.duplicates() {
            log::warn!(
                "{}: header declares {count} rows, found {}",
                path.display(),
                table.len() + table.duplicates()
            );
        }
    }
    if table.duplicates() > 0 {
        log::warn!("{}: {} duplicate word(s) ignored", path.display(), table.duplicates());
    }
    Ok(table)
}
