//! Identifier interning, access-log and document ingestion, dense-subset
//! selection, temporal splitting and the corpus snapshot format.
//!
//! Access logs are UTF-8 text with one `user<TAB>doc<TAB>timestamp` record per
//! line. Timestamps are ISO-8601: RFC 3339 with offset, a naive date-time
//! (taken as UTC) or a bare date (midnight UTC). Blank lines and lines starting
//! with `#` are skipped.
//!
//! A corpus snapshot is line-oriented text:
//!
//! ```text
//! aspect-rec corpus v1
//! users <N>
//! <one user id per line>
//! documents <M>
//! <one document id per line>
//! vocabulary <W>
//! <one word per line>
//! matrix user_doc <rows> <cols> <nnz>
//! <row> <col> <value>      (nnz lines, row-major)
//! matrix doc_word <rows> <cols> <nnz>
//! <row> <col> <value>
//! ```
//!
//! Values are written in shortest round-trip form, so reading a snapshot back
//! reproduces every value bit for bit.

use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use indexmap::IndexSet;

use crate::error::{Error, Result};
use crate::sparse::SparseCounts;
use crate::textproc::tokenize;

/// Default number of leading bytes of each document text that are tokenized.
pub const DEFAULT_TRUNCATION_BYTES: usize = 5120;

const SNAPSHOT_MAGIC: &str = "aspect-rec corpus v1";

/// One document-detail access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub user: String,
    pub document: String,
    pub timestamp: DateTime<Utc>,
}

/// A log line that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub events: Vec<AccessEvent>,
    pub rejected: Vec<RejectedLine>,
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

/// Parses an access log. Malformed lines are collected, with their 1-based
/// line numbers, instead of aborting the parse.
pub fn parse_access_log<R: BufRead>(reader: R) -> Result<ParsedLog> {
    let mut parsed = ParsedLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        let reject = |reason: String| RejectedLine {
            line: line_no,
            reason,
        };
        if fields.len() != 3 {
            parsed.rejected.push(reject(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
            continue;
        }
        let (user, document) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || document.is_empty() {
            parsed.rejected.push(reject("empty identifier".into()));
            continue;
        }
        match parse_timestamp(fields[2].trim()) {
            Some(timestamp) => parsed.events.push(AccessEvent {
                user: user.to_string(),
                document: document.to_string(),
                timestamp,
            }),
            None => parsed
                .rejected
                .push(reject(format!("unparseable timestamp {:?}", fields[2]))),
        }
    }
    Ok(parsed)
}

/// Users, documents and vocabulary with their co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub users: Vec<String>,
    pub documents: Vec<String>,
    pub vocabulary: Vec<String>,
    /// `n(u, d)`, users × documents.
    pub user_doc: SparseCounts,
    /// `n(d, w)`, documents × vocabulary.
    pub doc_word: SparseCounts,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus {
            users: Vec::new(),
            documents: Vec::new(),
            vocabulary: Vec::new(),
            user_doc: SparseCounts::zeros(0, 0),
            doc_word: SparseCounts::zeros(0, 0),
        }
    }
}

#[derive(Default)]
struct Interner(IndexSet<String>);

impl Interner {
    fn intern(&mut self, s: &str) -> usize {
        match self.0.get_index_of(s) {
            Some(i) => i,
            None => self.0.insert_full(s.to_string()).0,
        }
    }

    fn into_vec(self) -> Vec<String> {
        self.0.into_iter().collect()
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateIdentifier(id.clone()));
        }
    }
    Ok(())
}

impl Corpus {
    /// Assembles a corpus, checking identifier uniqueness and dimensions.
    pub fn new(
        users: Vec<String>,
        documents: Vec<String>,
        vocabulary: Vec<String>,
        user_doc: SparseCounts,
        doc_word: SparseCounts,
    ) -> Result<Self> {
        check_unique(&users)?;
        check_unique(&documents)?;
        check_unique(&vocabulary)?;
        if user_doc.n_rows() != users.len() || user_doc.n_cols() != documents.len() {
            return Err(Error::DimensionMismatch(format!(
                "user_doc is {}x{} but there are {} users and {} documents",
                user_doc.n_rows(),
                user_doc.n_cols(),
                users.len(),
                documents.len()
            )));
        }
        if doc_word.n_rows() != documents.len() || doc_word.n_cols() != vocabulary.len() {
            return Err(Error::DimensionMismatch(format!(
                "doc_word is {}x{} but there are {} documents and {} words",
                doc_word.n_rows(),
                doc_word.n_cols(),
                documents.len(),
                vocabulary.len()
            )));
        }
        Ok(Corpus {
            users,
            documents,
            vocabulary,
            user_doc,
            doc_word,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn n_words(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn user_index(&self, id: &str) -> Result<usize> {
        self.users
            .iter()
            .position(|u| u == id)
            .ok_or_else(|| Error::UnknownUser(id.to_string()))
    }

    pub fn document_index(&self, id: &str) -> Result<usize> {
        self.documents
            .iter()
            .position(|d| d == id)
            .ok_or_else(|| Error::UnknownDocument(id.to_string()))
    }

    /// Same corpus with a different user-document matrix (e.g. a smoothed
    /// or held-out one).
    pub fn with_user_doc(&self, user_doc: SparseCounts) -> Result<Self> {
        Corpus::new(
            self.users.clone(),
            self.documents.clone(),
            self.vocabulary.clone(),
            user_doc,
            self.doc_word.clone(),
        )
    }

    /// Tokenizes document texts into `doc_word`, replacing any previous
    /// content. Each text is cut to its first `truncation_bytes` bytes (backing
    /// off to a character boundary). Documents without text get empty rows.
    /// Vocabulary is interned in first-seen order over the given texts.
    pub fn ingest_documents<'a, I>(
        &mut self,
        texts: I,
        truncation_bytes: usize,
        stopwords: Option<&std::collections::HashSet<String>>,
    ) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let index: std::collections::HashMap<&str, usize> = self
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let mut vocab = Interner::default();
        let mut triplets = Vec::new();
        for (doc_id, text) in texts {
            let d = *index
                .get(doc_id)
                .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
            for token in tokenize(truncate_utf8(text, truncation_bytes)) {
                if stopwords.is_some_and(|s| s.contains(&token)) {
                    continue;
                }
                triplets.push((d, vocab.intern(&token), 1.0));
            }
        }
        let vocabulary = vocab.into_vec();
        self.doc_word = SparseCounts::accumulate(self.documents.len(), vocabulary.len(), triplets)?;
        self.vocabulary = vocabulary;
        Ok(())
    }

    /// Keeps the `n_users` most active users, then the `n_docs` documents
    /// those users accessed most. Ties go to the earlier-interned identifier.
    /// Kept rows and columns retain their relative order; the vocabulary is
    /// pruned to words still occurring in a kept document.
    pub fn select_dense_subset(&self, n_users: usize, n_docs: usize) -> Result<Corpus> {
        let selection = DenseSelection::compute(&self.user_doc, n_users, n_docs)?;
        Ok(self.restrict(&selection))
    }

    /// Restricts the corpus to a previously computed selection.
    pub fn restrict(&self, selection: &DenseSelection) -> Corpus {
        let user_doc = self.user_doc.restrict(&selection.users, &selection.documents);
        let kept_words: Vec<usize> = {
            let mut present = vec![false; self.n_words()];
            for &d in &selection.documents {
                for (w, _) in self.doc_word.row_iter(d) {
                    present[w] = true;
                }
            }
            (0..self.n_words()).filter(|&w| present[w]).collect()
        };
        let doc_word = self.doc_word.restrict(&selection.documents, &kept_words);
        Corpus {
            users: selection.users.iter().map(|&u| self.users[u].clone()).collect(),
            documents: selection
                .documents
                .iter()
                .map(|&d| self.documents[d].clone())
                .collect(),
            vocabulary: kept_words.iter().map(|&w| self.vocabulary[w].clone()).collect(),
            user_doc,
            doc_word,
        }
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SNAPSHOT_MAGIC}")?;
        for (name, ids) in [
            ("users", &self.users),
            ("documents", &self.documents),
            ("vocabulary", &self.vocabulary),
        ] {
            writeln!(out, "{name} {}", ids.len())?;
            for id in ids {
                writeln!(out, "{id}")?;
            }
        }
        write_matrix(&mut out, "user_doc", &self.user_doc)?;
        write_matrix(&mut out, "doc_word", &self.doc_word)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(reader: R) -> Result<Corpus> {
        let mut lines = LineReader::new(reader);
        let magic = lines.next_line()?;
        if magic != SNAPSHOT_MAGIC {
            return Err(Error::parse(lines.line_no, format!("bad header {magic:?}")));
        }
        let users = lines.identifiers("users")?;
        let documents = lines.identifiers("documents")?;
        let vocabulary = lines.identifiers("vocabulary")?;
        let user_doc = lines.matrix("user_doc")?;
        let doc_word = lines.matrix("doc_word")?;
        Corpus::new(users, documents, vocabulary, user_doc, doc_word)
    }
}

/// Truncates to at most `max_bytes` bytes without splitting a character.
pub fn truncate_utf8(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut end = max_bytes;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

/// Builds a corpus (with an empty vocabulary) from access events. Entry
/// `(u, d)` counts the events for that pair; identifiers are interned in
/// first-seen order.
pub fn ingest_access_log<'a, I>(events: I) -> Corpus
where
    I: IntoIterator<Item = &'a AccessEvent>,
{
    let mut users = Interner::default();
    let mut docs = Interner::default();
    let triplets: Vec<_> = events
        .into_iter()
        .map(|e| (users.intern(&e.user), docs.intern(&e.document), 1.0))
        .collect();
    let (users, documents) = (users.into_vec(), docs.into_vec());
    let user_doc = SparseCounts::accumulate(users.len(), documents.len(), triplets)
        .expect("interned indices are in range");
    Corpus {
        doc_word: SparseCounts::zeros(documents.len(), 0),
        users,
        documents,
        vocabulary: Vec::new(),
        user_doc,
    }
}

/// Train and test corpora sharing one identifier interning.
#[derive(Debug, Clone)]
pub struct TemporalSplit {
    pub train: Corpus,
    pub test: Corpus,
}

/// Events strictly before `cutoff` go to train, the rest to test.
pub fn temporal_split(events: &[AccessEvent], cutoff: DateTime<Utc>) -> TemporalSplit {
    let all = ingest_access_log(events);
    let user_ix: std::collections::HashMap<&str, usize> = all
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let doc_ix: std::collections::HashMap<&str, usize> = all
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for e in events {
        let cell = (user_ix[e.user.as_str()], doc_ix[e.document.as_str()], 1.0);
        if e.timestamp < cutoff {
            train.push(cell);
        } else {
            test.push(cell);
        }
    }
    let (n, m) = (all.n_users(), all.n_documents());
    let build = |cells| Corpus {
        user_doc: SparseCounts::accumulate(n, m, cells).expect("interned indices are in range"),
        ..all.clone()
    };
    TemporalSplit {
        train: build(train),
        test: build(test),
    }
}

/// Row and column indices chosen by dense-subset selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseSelection {
    pub users: Vec<usize>,
    pub documents: Vec<usize>,
}

impl DenseSelection {
    pub fn compute(user_doc: &SparseCounts, n_users: usize, n_docs: usize) -> Result<Self> {
        if n_users > user_doc.n_rows() {
            return Err(Error::SubsetTooLarge {
                what: "users",
                requested: n_users,
                available: user_doc.n_rows(),
            });
        }
        if n_docs > user_doc.n_cols() {
            return Err(Error::SubsetTooLarge {
                what: "documents",
                requested: n_docs,
                available: user_doc.n_cols(),
            });
        }
        let users = top_by_activity(&user_doc.row_sums(), n_users);
        let mut doc_activity = vec![0.0; user_doc.n_cols()];
        for &u in &users {
            for (d, v) in user_doc.row_iter(u) {
                doc_activity[d] += v;
            }
        }
        let documents = top_by_activity(&doc_activity, n_docs);
        Ok(DenseSelection { users, documents })
    }
}

/// Indices of the `n` largest activities, ties to the smaller index, returned
/// in ascending index order.
fn top_by_activity(activity: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..activity.len()).collect();
    order.sort_by(|&a, &b| activity[b].total_cmp(&activity[a]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    order
}

fn write_matrix<W: Write>(out: &mut W, name: &str, m: &SparseCounts) -> Result<()> {
    writeln!(out, "matrix {name} {} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        writeln!(out, "{r} {c} {v:?}")?;
    }
    Ok(())
}

pub(crate) struct LineReader<R> {
    lines: std::io::Lines<R>,
    pub(crate) line_no: usize,
}

impl<R: BufRead> LineReader<R> {
    pub(crate) fn new(reader: R) -> Self {
        LineReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<String> {
        self.line_no += 1;
        match self.lines.next() {
            Some(line) => Ok(line?),
            None => Err(Error::parse(self.line_no, "unexpected end of input")),
        }
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line_no, message)
    }

    /// Reads a `<keyword> <fields...>` header and returns the fields.
    pub(crate) fn header(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}` section, found {line:?}")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn identifiers(&mut self, keyword: &str) -> Result<Vec<String>> {
        let fields = self.header(keyword)?;
        let count: usize = match fields.as_slice() {
            [n] => self.parse(n)?,
            _ => return Err(self.err("expected a count")),
        };
        (0..count).map(|_| self.next_line()).collect()
    }

    fn matrix(&mut self, name: &str) -> Result<SparseCounts> {
        let fields = self.header("matrix")?;
        if fields.len() != 4 || fields[0] != name {
            return Err(self.err(format!("expected `matrix {name} rows cols nnz`")));
        }
        let rows: usize = self.parse(&fields[1])?;
        let cols: usize = self.parse(&fields[2])?;
        let nnz: usize = self.parse(&fields[3])?;
        let mut triplets = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let line = self.next_line()?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(self.err("expected `row col value`"));
            }
            triplets.push((
                self.parse(parts[0])?,
                self.parse(parts[1])?,
                self.parse(parts[2])?,
            ));
        }
        SparseCounts::from_triplets(rows, cols, triplets)
            .map_err(|e| self.err(format!("matrix {name}: {e}")))
    }
}
