//! Statement tokenizer for Maple-style surface syntax.
//!
//! A chunk is cut at `;` / `:` terminators that appear outside double-quoted
//! strings and `#` line comments. `:` is only a terminator when it does not
//! begin `:=`, `::`, or `:-`. Statement slices partition the input, so
//! concatenating them reproduces the chunk exactly. A trailing unterminated
//! fragment becomes one final statement.

use super::{Statement, StatementKind};

/// Split a chunk of CAS input into statements.
pub fn split_statements(chunk: &str) -> Vec<Statement> {
    let mut statements = Vec::new();
    let mut start = 0;
    let mut in_string = false;
    let mut in_comment = false;
    let mut chars = chunk.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if in_string {
            match c {
                '\\' => {
                    chars.next();
                }
                '"' => in_string = false,
                _ => {}
            }
        } else if in_comment {
            if c == '\n' {
                in_comment = false;
            }
        } else {
            match c {
                '"' => in_string = true,
                '#' => in_comment = true,
                ';' => {
                    let end = i + c.len_utf8();
                    statements.push(make_statement(&chunk[start..end]));
                    start = end;
                }
                ':' => match chars.peek() {
                    // `:=` assignment, `::` type spec, `:-` member access
                    Some((_, '=')) | Some((_, ':')) | Some((_, '-')) => {
                        chars.next();
                    }
                    _ => {
                        let end = i + c.len_utf8();
                        statements.push(make_statement(&chunk[start..end]));
                        start = end;
                    }
                },
                _ => {}
            }
        }
    }

    if start < chunk.len() {
        statements.push(make_statement(&chunk[start..]));
    }
    statements
}

/// True iff the statement is a workspace-wiping `restart`.
pub fn is_restart(statement: &Statement) -> bool {
    statement.kind == StatementKind::Restart
}

fn make_statement(text: &str) -> Statement {
    Statement { text: text.to_string(), kind: classify(text) }
}

/// Kind assignment: comments and surrounding whitespace are ignored; what
/// remains decides between blank, comment-only, restart, and executable.
fn classify(text: &str) -> StatementKind {
    let (code, saw_comment) = strip_comments(text);
    let code = code.trim();
    if code.is_empty() {
        return if saw_comment { StatementKind::CommentOnly } else { StatementKind::Blank };
    }
    if let Some(rest) = code.strip_prefix("restart") {
        let boundary = rest
            .chars()
            .next()
            .map_or(true, |c| !c.is_alphanumeric() && c != '_');
        if boundary {
            return StatementKind::Restart;
        }
    }
    StatementKind::Executable
}

/// Remove `#` comments (outside strings) from a statement's text. Returns the
/// remaining code and whether any comment was seen.
fn strip_comments(text: &str) -> (String, bool) {
    let mut out = String::with_capacity(text.len());
    let mut saw_comment = false;
    let mut in_string = false;
    let mut in_comment = false;
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            match c {
                '\\' => {
                    if let Some(next) = chars.next() {
                        out.push(next);
                    }
                }
                '"' => in_string = false,
                _ => {}
            }
        } else if in_comment {
            if c == '\n' {
                in_comment = false;
                out.push(c);
            }
        } else {
            match c {
                '"' => {
                    in_string = true;
                    out.push(c);
                }
                '#' => {
                    in_comment = true;
                    saw_comment = true;
                }
                _ => out.push(c),
            }
        }
    }
    (out, saw_comment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(chunk: &str) -> Vec<StatementKind> {
        split_statements(chunk).iter().map(|s| s.kind).collect()
    }

    #[test]
    fn restart_then_init_splits_into_two() {
        let stmts = split_statements("restart;\ninterface(prettyprint = 0):");
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[0].text, "restart;");
        assert_eq!(stmts[0].kind, StatementKind::Restart);
        assert_eq!(stmts[1].text, "\ninterface(prettyprint = 0):");
        assert_eq!(stmts[1].kind, StatementKind::Executable);
    }

    #[test]
    fn comment_only_chunk() {
        assert_eq!(kinds("# only a comment line"), vec![StatementKind::CommentOnly]);
    }

    #[test]
    fn string_literal_hides_terminators() {
        let stmts = split_statements("s := \"a;b\": t := 1;");
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[0].text, "s := \"a;b\":");
        assert_eq!(stmts[1].text, " t := 1;");
        assert!(stmts.iter().all(|s| s.kind == StatementKind::Executable));
    }

    #[test]
    fn reassembly_is_byte_identity() {
        let chunk = "# heading\nx := 1; y := \"a:b\"; # trail\nrestart ;\n  \nz";
        let joined: String = split_statements(chunk).iter().map(|s| s.text.as_str()).collect();
        assert_eq!(joined, chunk);
    }

    #[test]
    fn restart_word_boundary() {
        assert!(is_restart(&split_statements("restart;")[0]));
        assert!(is_restart(&split_statements("  restart : ")[0]));
        assert!(is_restart(&split_statements("restart")[0]));
        assert!(!is_restart(&split_statements("restart_counter := 0;")[0]));
        assert!(!is_restart(&split_statements("restarting;")[0]));
    }

    #[test]
    fn leading_comments_do_not_mask_restart() {
        let stmts = split_statements("# step 1\n# setup\nrestart;");
        assert_eq!(stmts.len(), 1);
        assert_eq!(stmts[0].kind, StatementKind::Restart);
    }

    #[test]
    fn assignment_and_type_colons_do_not_split() {
        let stmts = split_statements("p := proc(x::integer) x end proc: q:-member;");
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[0].text, "p := proc(x::integer) x end proc:");
    }

    #[test]
    fn comment_terminators_are_inert() {
        let stmts = split_statements("# note: this; stays\nx := 1;");
        assert_eq!(stmts.len(), 1);
        assert_eq!(stmts[0].kind, StatementKind::Executable);
    }

    #[test]
    fn trailing_fragment_kinds() {
        assert_eq!(kinds("x := 1"), vec![StatementKind::Executable]);
        assert_eq!(kinds("   \n "), vec![StatementKind::Blank]);
        let stmts = split_statements("x := 1; \n");
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[1].kind, StatementKind::Blank);
    }

    #[test]
    fn empty_chunk_has_no_statements() {
        assert!(split_statements("").is_empty());
    }

    #[test]
    fn escaped_quote_stays_inside_string() {
        let stmts = split_statements("s := \"a\\\";b\"; t;");
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[0].text, "s := \"a\\\";b\";");
    }
}
