use std::collections::HashSet;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

/// Bundled English stop words. Contractions are listed without apostrophes
/// because apostrophes are deleted before lookup.
pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "ain", "all", "am", "an", "and", "any", "are", "aren", "arent",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "couldn",
    "couldnt", "d", "did", "didn", "didnt", "do", "does", "doesn", "doesnt", "doing", "don", "dont", "down", "during",
    "each", "few", "for", "from", "further", "had", "hadn", "hadnt", "has", "hasn", "hasnt", "have", "haven", "havent",
    "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is",
    "isn", "isnt", "it", "its", "itself", "just", "ll", "m", "ma", "me", "mightn", "more", "most", "mustn", "my",
    "myself", "needn", "no", "nor", "not", "now", "o", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "re", "s", "same", "shan", "she", "shes", "should", "shouldn", "shouldnt", "so",
    "some", "such", "t", "than", "that", "thatll", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "ve", "very", "was", "wasn",
    "wasnt", "we", "were", "weren", "werent", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "won", "wont", "wouldn", "wouldnt", "y", "you", "youd", "youll", "your", "youre", "yours", "yourself",
    "yourselves", "youve",
];

fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().copied().collect())
}

fn stemmer() -> &'static Stemmer {
    static S: OnceLock<Stemmer> = OnceLock::new();
    S.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Stems until the token stops changing, so output tokens are fixed points.
fn stem(token: &str) -> String {
    let mut cur = token.to_string();
    for _ in 0..8 {
        let next = stemmer().stem(&cur).into_owned();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Lowercases, drops punctuation, removes stop words and stems. Running it
/// again on its own space-joined output returns the same tokens.
pub fn preprocess_text(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let stops = stop_words();
    lowered
        .split_whitespace()
        .filter(|t| !stops.contains(t))
        .map(stem)
        .filter(|t| !t.is_empty() && !stops.contains(t.as_str()))
        .collect()
}
