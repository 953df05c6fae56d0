use super::Token;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text into word tokens (alphanumeric runs, with inner apostrophes)
/// and single-character punctuation tokens. Whitespace is discarded.
pub fn tokenize_surfaces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if !is_word_char(c) {
            out.push(&text[start..start + c.len_utf8()]);
            continue;
        }
        let mut end = start + c.len_utf8();
        while let Some(&(i, c)) = chars.peek() {
            if is_word_char(c) {
                end = i + c.len_utf8();
                chars.next();
            } else if c == '\'' || c == '\u{2019}' {
                // keep "don't", but not a trailing quote
                let mut ahead = chars.clone();
                ahead.next();
                match ahead.peek() {
                    Some(&(_, n)) if is_word_char(n) => {
                        end = i + c.len_utf8();
                        chars.next();
                    }
                    _ => break,
                }
            } else {
                break;
            }
        }
        out.push(&text[start..end]);
    }
    out
}

pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_surfaces(text).into_iter().map(Token::plain).collect()
}
