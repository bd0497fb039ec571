//! Pluggable token counting for prompt-overhead accounting.
//!
//! Token counts feed the overhead metric only; nothing downstream depends on
//! a particular tokenizer, so the counter is a named strategy selected at
//! run time and recorded in the run manifest.

/// Counts tokens in a prompt fragment.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn count(&self, text: &str) -> u64;
}

/// Whitespace-delimited word count. The default: stable, transparent, and
/// good enough for relative overhead comparisons between conditions.
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &'static str {
        "whitespace"
    }

    fn count(&self, text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }
}

/// Four-characters-per-token estimate, the common rule of thumb for BPE
/// vocabularies. Useful as a sensitivity check on overhead conclusions.
pub struct CharQuadTokenizer;

impl Tokenizer for CharQuadTokenizer {
    fn name(&self) -> &'static str {
        "char4"
    }

    fn count(&self, text: &str) -> u64 {
        (text.chars().count() as u64).div_ceil(4)
    }
}

/// Look up a tokenizer strategy by name.
pub fn tokenizer(name: &str) -> Option<Box<dyn Tokenizer>> {
    match name {
        "whitespace" => Some(Box::new(WhitespaceTokenizer)),
        "char4" => Some(Box::new(CharQuadTokenizer)),
        _ => None,
    }
}

pub fn tokenizer_names() -> &'static [&'static str] {
    &["whitespace", "char4"]
}

pub fn default_tokenizer() -> Box<dyn Tokenizer> {
    Box::new(WhitespaceTokenizer)
}
