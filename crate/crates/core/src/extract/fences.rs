use serde::{Deserialize, Serialize};

/// A fenced block found in a model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FencedBlock {
    /// Zero-based position among all blocks of the document.
    pub ordinal: usize,
    /// First word of the info string, if any.
    pub tag: Option<String>,
    pub content: String,
    /// False when the document ended before a closing fence.
    pub terminated: bool,
}

impl FencedBlock {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tag.as_deref().is_some_and(|t| t.eq_ignore_ascii_case(tag))
    }
}

/// Splits a document into fenced blocks.
///
/// Fences are runs of three or more backticks or tildes and may start or end
/// in the middle of a line. A block closes at the next run of the same
/// character that is at least as long as the opening run.
pub fn parse_fences(doc: &str) -> Vec<FencedBlock> {
    scan(doc).0
}

/// Blocks plus the byte offset just past the last closing fence.
pub(crate) fn scan(doc: &str) -> (Vec<FencedBlock>, usize) {
    let mut blocks = Vec::new();
    let mut pos = 0;
    while let Some((open_at, fence_char, open_len)) = find_run(doc, pos, None) {
        let after_open = open_at + open_len;
        let line_end = doc[after_open..].find('\n').map(|i| after_open + i).unwrap_or(doc.len());
        let info = &doc[after_open..line_end];

        // A closing run on the same line makes a one-line block without a tag.
        if let Some((close_at, _, close_len)) = find_run(info, 0, Some((fence_char, open_len))) {
            let content = info[..close_at].trim().to_string();
            blocks.push(FencedBlock { ordinal: blocks.len(), tag: None, content, terminated: true });
            pos = after_open + close_at + close_len;
            continue;
        }

        let tag = info
            .split_whitespace()
            .next()
            .map(|w| w.trim_matches(|c: char| c == '{' || c == '}' || c == '.').to_string())
            .filter(|w| !w.is_empty());
        let body_start = (line_end + 1).min(doc.len());
        match find_run(doc, body_start, Some((fence_char, open_len))) {
            Some((close_at, _, close_len)) => {
                let content = strip_one_newline(&doc[body_start..close_at]).to_string();
                blocks.push(FencedBlock { ordinal: blocks.len(), tag, content, terminated: true });
                pos = close_at + close_len;
            }
            None => {
                let content = strip_one_newline(&doc[body_start..]).to_string();
                blocks.push(FencedBlock { ordinal: blocks.len(), tag, content, terminated: false });
                return (blocks, doc.len());
            }
        }
    }
    (blocks, pos)
}

fn strip_one_newline(text: &str) -> &str {
    text.strip_suffix("\r\n").or_else(|| text.strip_suffix('\n')).unwrap_or(text)
}

/// Finds the next fence run at or after `from`. With `closing`, only runs of
/// the given character and at least the given length qualify.
fn find_run(text: &str, from: usize, closing: Option<(u8, usize)>) -> Option<(usize, u8, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'`' || c == b'~' {
            let start = i;
            while i < bytes.len() && bytes[i] == c {
                i += 1;
            }
            let len = i - start;
            let wanted = match closing {
                Some((want, min)) => c == want && len >= min,
                None => len >= 3,
            };
            if wanted {
                return Some((start, c, len));
            }
        } else {
            i += 1;
        }
    }
    None
}
