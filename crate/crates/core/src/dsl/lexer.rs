use crate::dsl::ast::{Pos, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    LBrace,
    RBrace,
    Comma,
    Colon,
    Newline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn is_punct(c: char) -> bool {
    matches!(c, '{' | '}' | ',' | ':' | '#')
}

/// Splits `.tdm` text into tokens. `#` starts a comment running to end of line;
/// CR is treated as whitespace so CRLF input lexes like LF input.
pub(crate) fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let start = Pos { line, column: col };
        match c {
            '\n' => {
                chars.next();
                out.push(Token {
                    tok: Tok::Newline,
                    span: Span::new(
                        start,
                        Pos {
                            line,
                            column: col + 1,
                        },
                    ),
                });
                line += 1;
                col = 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '{' | '}' | ',' | ':' => {
                chars.next();
                col += 1;
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    _ => Tok::Colon,
                };
                out.push(Token {
                    tok,
                    span: Span::new(start, Pos { line, column: col }),
                });
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || is_punct(c) {
                        break;
                    }
                    word.push(c);
                    chars.next();
                    col += 1;
                }
                out.push(Token {
                    tok: Tok::Word(word),
                    span: Span::new(start, Pos { line, column: col }),
                });
            }
        }
    }
    out
}

/// Identifiers: an ASCII letter, digit or `_`, then letters, digits, `_`, `.` or `-`.
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<Tok> {
        lex(text).into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn comments_and_crlf() {
        assert_eq!(
            words("role R # owner\r\ndomain D"),
            vec![
                Tok::Word("role".into()),
                Tok::Word("R".into()),
                Tok::Newline,
                Tok::Word("domain".into()),
                Tok::Word("D".into()),
            ]
        );
    }

    #[test]
    fn punctuation_splits_words() {
        assert_eq!(
            words("in D1,D2 x:y"),
            vec![
                Tok::Word("in".into()),
                Tok::Word("D1".into()),
                Tok::Comma,
                Tok::Word("D2".into()),
                Tok::Word("x".into()),
                Tok::Colon,
                Tok::Word("y".into()),
            ]
        );
    }

    #[test]
    fn spans_are_one_based() {
        let toks = lex("role R\n  domain D");
        assert_eq!(
            toks[1].span,
            Span::new(Pos { line: 1, column: 6 }, Pos { line: 1, column: 7 })
        );
        assert_eq!(toks[3].span.start, Pos { line: 2, column: 3 });
    }

    #[test]
    fn identifiers() {
        assert!(is_ident("SS3.Demographics"));
        assert!(is_ident("SS1-SS3-Demo-TDom"));
        assert!(is_ident("own-review-submitted"));
        assert!(!is_ident("->"));
        assert!(!is_ident("<->"));
        assert!(!is_ident(""));
        assert!(!is_ident("*"));
    }
}
