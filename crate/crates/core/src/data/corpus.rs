use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub category: usize,
}

impl LabeledSentence {
    pub fn new(tokens: Vec<String>, category: usize) -> Self {
        Self { tokens, category }
    }

    /// Whitespace tokenization; no normalization is applied.
    pub fn from_text(text: &str, category: usize) -> Self {
        Self { tokens: text.split_whitespace().map(str::to_string).collect(), category }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Sentences with category ids in `0..num_categories`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    sentences: Vec<LabeledSentence>,
    num_categories: usize,
    provenance: String,
}

impl LabeledCorpus {
    pub fn new(sentences: Vec<LabeledSentence>, num_categories: usize, provenance: impl Into<String>) -> Result<Self> {
        if num_categories == 0 {
            return Err(Error::Data("a corpus needs at least one category".into()));
        }
        if let Some(s) = sentences.iter().find(|s| s.category >= num_categories) {
            return Err(Error::Data(format!(
                "category {} out of range for {num_categories} categories",
                s.category
            )));
        }
        Ok(Self { sentences, num_categories, provenance: provenance.into() })
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<LabeledSentence> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn counts_per_category(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories];
        for s in &self.sentences {
            counts[s.category] += 1;
        }
        counts
    }

    pub fn max_len(&self) -> usize {
        self.sentences.iter().map(LabeledSentence::len).max().unwrap_or(0)
    }

    /// Reads the TSV exchange format: `category<TAB>space separated tokens`,
    /// one sentence per line. Blank lines and lines starting with `#` are
    /// skipped. The category count is
    /// inferred as `max id + 1`.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(path.as_ref(), false)
    }

    /// Like [`LabeledCorpus::load_tsv`] but accepts empty texts, which a
    /// generator emits when it stops immediately.
    pub fn load_generated_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(path.as_ref(), true)
    }

    fn parse_tsv(path: &Path, allow_empty: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let mut sentences = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((cat, body)) = line.split_once('\t') else {
                return Err(parse_err(lineno, "missing TAB between category and text".into()));
            };
            let category: usize = cat
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("category `{cat}` is not a non-negative integer")))?;
            let s = LabeledSentence::from_text(body, category);
            if s.is_empty() && !allow_empty {
                return Err(parse_err(lineno, "empty text".into()));
            }
            sentences.push(s);
        }
        let k = sentences.iter().map(|s| s.category + 1).max().unwrap_or(1);
        let provenance = path.file_stem().map_or_else(|| "tsv".into(), |s| s.to_string_lossy().into_owned());
        Self::new(sentences, k, provenance)
    }

    pub fn to_tsv(&self) -> String {
        write_tsv_string(self.sentences.iter().map(|s| (s.category, s.tokens.as_slice())))
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Keeps sentences with `min <= length <= max`. An empty result is legal;
    /// callers check [`LabeledCorpus::is_empty`].
    pub fn filter_by_length(&self, min: usize, max: usize) -> Result<Self> {
        if min > max {
            return Err(Error::Config(format!("length filter min {min} exceeds max {max}")));
        }
        let kept = self.sentences.iter().filter(|s| (min..=max).contains(&s.len())).cloned().collect();
        Self::new(kept, self.num_categories, format!("{}|len{min}-{max}", self.provenance))
    }

    /// Draws up to `per_category` sentences from each category without
    /// replacement, keeping the original relative order.
    pub fn subsample(&self, per_category: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = vec![false; self.len()];
        for c in 0..self.num_categories {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.sentences[i].category == c).collect();
            idx.shuffle(&mut rng);
            idx.truncate(per_category);
            for i in idx {
                keep[i] = true;
            }
        }
        let kept = self.sentences.iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| s.clone()).collect();
        Self::new(kept, self.num_categories, format!("{}|sample{per_category}@{seed}", self.provenance))
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }
}

/// Formats `(category, tokens)` pairs as TSV lines.
pub fn write_tsv_string<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (usize, &'a [String])>,
{
    let mut out = String::new();
    for (c, toks) in rows {
        out.push_str(&c.to_string());
        out.push('\t');
        out.push_str(&toks.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_lines_and_infers_k() {
        let f = write("0\tthe film is good\n3\tbad movie\n");
        let c = LabeledCorpus::load_tsv(f.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.num_categories(), 4);
        assert_eq!(c.sentences()[1].tokens, vec!["bad", "movie"]);
    }

    #[test]
    fn missing_tab_reports_line() {
        let f = write("0\tfine line\n1 no tab here\n");
        match LabeledCorpus::load_tsv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_category_and_empty_text_rejected() {
        assert!(matches!(LabeledCorpus::load_tsv(write("x\tword\n").path()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(LabeledCorpus::load_tsv(write("0\t   \n").path()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(LabeledCorpus::load_tsv("/nonexistent/file.tsv"), Err(Error::Io { .. })));
    }

    #[test]
    fn filter_is_inclusive() {
        let lens = [10usize, 15, 30, 31];
        let sentences = lens
            .iter()
            .map(|&n| LabeledSentence::new((0..n).map(|i| format!("w{i}")).collect(), 0))
            .collect();
        let c = LabeledCorpus::new(sentences, 1, "t").unwrap();
        let kept: Vec<usize> = c.filter_by_length(15, 30).unwrap().sentences().iter().map(|s| s.len()).collect();
        assert_eq!(kept, vec![15, 30]);
        assert!(c.filter_by_length(40, 50).unwrap().is_empty());
        assert!(c.filter_by_length(5, 4).is_err());
    }

    #[test]
    fn tsv_roundtrip() {
        let c = LabeledCorpus::new(
            vec![LabeledSentence::from_text("a b c", 1), LabeledSentence::from_text("d", 0)],
            2,
            "x",
        )
        .unwrap();
        let f = write(&c.to_tsv());
        let back = LabeledCorpus::load_tsv(f.path()).unwrap();
        assert_eq!(back.sentences(), c.sentences());
    }

    #[test]
    fn comments_skipped_and_generated_may_be_empty() {
        let f = write("# seed=3\n0\ta b\n1\t\n");
        assert!(LabeledCorpus::load_tsv(f.path()).is_err());
        let c = LabeledCorpus::load_generated_tsv(f.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.sentences()[1].is_empty());
    }

    #[test]
    fn subsample_is_seeded_and_bounded() {
        let sentences = (0..50).map(|i| LabeledSentence::from_text(&format!("s{i}"), i % 2)).collect();
        let c = LabeledCorpus::new(sentences, 2, "x").unwrap();
        let a = c.subsample(10, 5).unwrap();
        assert_eq!(a.counts_per_category(), vec![10, 10]);
        assert_eq!(a, c.subsample(10, 5).unwrap());
        assert_ne!(a.sentences(), c.subsample(10, 6).unwrap().sentences());
    }
}
