use serde_json::Value;

/// Finds the first balanced `{...}` or `[...]` in `text` that parses as
/// JSON. Returns the value and its byte span.
pub fn extract_json(text: &str) -> Option<(Value, usize, usize)> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(offset) = text[start..].find(['{', '[']) {
        let open = start + offset;
        if let Some(close) = balanced_end(bytes, open) {
            if let Ok(value) = serde_json::from_str::<Value>(&text[open..close]) {
                return Some((value, open, close));
            }
        }
        start = open + 1;
    }
    None
}

/// End (exclusive) of the bracketed run starting at `open`, honoring
/// string literals.
fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Plain prose around the JSON: fences dropped, split on sentence
/// punctuation, and any segment still holding brackets discarded.
pub fn speech_text(text: &str, span: Option<(usize, usize)>) -> Option<String> {
    let prose = match span {
        Some((a, b)) => format!("{} {}", &text[..a], &text[b..]),
        None => text.to_string(),
    };
    let cleaned: String = prose
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join(" ");
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in cleaned.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            sentences.push(std::mem::take(&mut current));
        }
    }
    sentences.push(current);
    let kept: Vec<String> = sentences
        .iter()
        .filter(|s| !s.contains(['{', '}', '[', ']']))
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .collect();
    if kept.is_empty() {
        None
    } else {
        Some(kept.join(" "))
    }
}
