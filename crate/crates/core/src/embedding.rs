//! Dense embedding spaces: a vocabulary plus one row vector per token.
//!
//! Two plain-text layouts are understood. The *header* layout starts with a
//! `<count> <dim>` line (what word2vec writes in text mode); the *headerless*
//! layout omits it and infers the dimensionality from the first row. Each
//! row is `<token> <f1> ... <fd>`, whitespace separated.
//!
//! Frequency ranks default to file order, because word2vec output is sorted
//! by corpus frequency.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Number of significant digits written by [`EmbeddingSpace::save`].
pub const PRINT_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    /// First line is `<count> <dim>`.
    #[default]
    TextHeader,
    /// Rows only.
    TextHeaderless,
}

/// A vocabulary-indexed dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
    freq_rank: Option<Vec<usize>>,
    normalized: bool,
}

impl EmbeddingSpace {
    /// Builds a space from a vocabulary and a matrix with one row per token.
    pub fn new(vocab: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::Shape(format!(
                "{} tokens but {} rows",
                vocab.len(),
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::Shape("dimensionality must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::DuplicateToken(tok.clone()));
            }
        }
        Ok(EmbeddingSpace {
            vocab,
            index,
            matrix,
            freq_rank: None,
            normalized: false,
        })
    }

    /// Attaches explicit frequency ranks (1 = most frequent). Tokens missing
    /// from `ranks` keep their file-order rank.
    pub fn with_freq_ranks(mut self, ranks: &HashMap<String, usize>) -> Result<Self> {
        let mut out = Vec::with_capacity(self.vocab.len());
        for (i, tok) in self.vocab.iter().enumerate() {
            let r = ranks.get(tok).copied().unwrap_or(i + 1);
            if r == 0 {
                return Err(Error::InvalidArgument(format!(
                    "frequency rank of `{tok}` must be positive"
                )));
            }
            out.push(r);
        }
        self.freq_rank = Some(out);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_parts(self) -> (Vec<String>, Array2<f64>) {
        (self.vocab, self.matrix)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.lookup(token).map(|i| self.matrix.row(i))
    }

    /// Frequency rank of `token`, 1-based.
    pub fn freq_rank(&self, token: &str) -> Option<usize> {
        let i = self.lookup(token)?;
        Some(match &self.freq_rank {
            Some(r) => r[i],
            None => i + 1,
        })
    }

    /// Reads a space from `path`.
    pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), format).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Reads a space from any reader.
    pub fn read<R: Read>(reader: R, format: EmbeddingFormat) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut declared: Option<(usize, usize)> = None;
        let mut dim: Option<usize> = None;
        let mut vocab = Vec::new();
        let mut data = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            if format == EmbeddingFormat::TextHeader && declared.is_none() {
                declared = Some(parse_header(&line, lineno)?);
                dim = declared.map(|(_, d)| d);
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a field");
            let start = data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("`{f}` is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::parse(lineno, format!("`{f}` is not finite")));
                }
                data.push(v);
            }
            let n = data.len() - start;
            match dim {
                None => {
                    if n == 0 {
                        return Err(Error::parse(lineno, "row has no values"));
                    }
                    dim = Some(n);
                }
                Some(d) if d != n => {
                    return Err(Error::parse(
                        lineno,
                        format!("expected {d} values, found {n}"),
                    ));
                }
                Some(_) => {}
            }
            vocab.push(token.to_owned());
        }

        let Some(dim) = dim else {
            return Err(Error::Empty);
        };
        if let Some((count, _)) = declared {
            if count != vocab.len() {
                return Err(Error::parse(
                    1,
                    format!("header declares {count} rows, file has {}", vocab.len()),
                ));
            }
        }
        if vocab.is_empty() {
            return Err(Error::Empty);
        }
        let matrix = Array2::from_shape_vec((vocab.len(), dim), data)
            .expect("row lengths were checked");
        EmbeddingSpace::new(vocab, matrix)
    }

    /// Writes the space in `format`, values rounded to [`PRINT_DIGITS`]
    /// significant digits.
    pub fn save(&self, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w, format)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, w: &mut W, format: EmbeddingFormat) -> std::io::Result<()> {
        if format == EmbeddingFormat::TextHeader {
            writeln!(w, "{} {}", self.len(), self.dim())?;
        }
        for (tok, row) in self.vocab.iter().zip(self.matrix.rows()) {
            w.write_all(tok.as_bytes())?;
            for &v in row {
                write!(w, " {:?}", round_significant(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Scales every row to unit Euclidean norm.
    pub fn unit_normalize(&self) -> Result<Self> {
        let mut matrix = self.matrix.clone();
        for (tok, mut row) in self.vocab.iter().zip(matrix.rows_mut()) {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroVector(tok.clone()));
            }
            row /= norm;
        }
        Ok(EmbeddingSpace {
            matrix,
            normalized: true,
            ..self.clone()
        })
    }

    /// Gathers the rows of `tokens` in request order. Tokens absent from
    /// the vocabulary are returned in the second element instead.
    pub fn subset<S: AsRef<str>>(&self, tokens: &[S]) -> (Array2<f64>, Vec<String>) {
        let mut rows = Vec::with_capacity(tokens.len());
        let mut missing = Vec::new();
        for t in tokens {
            match self.lookup(t.as_ref()) {
                Some(i) => rows.push(i),
                None => missing.push(t.as_ref().to_owned()),
            }
        }
        (self.matrix.select(Axis(0), &rows), missing)
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let parse = |f: Option<&str>| -> Result<usize> {
        f.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "expected header `<count> <dim>`"))
    };
    let count = parse(it.next())?;
    let dim = parse(it.next())?;
    if it.next().is_some() || dim == 0 {
        return Err(Error::parse(lineno, "expected header `<count> <dim>`"));
    }
    Ok((count, dim))
}

/// Rounds to [`PRINT_DIGITS`] significant digits and returns the shortest
/// decimal that parses back to the rounded value.
pub(crate) fn round_significant(v: f64) -> f64 {
    format!("{:.*e}", PRINT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}
