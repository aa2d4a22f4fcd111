//! Keyword sketches of SQL strings: which items of a fixed clause-and-
//! operator vocabulary appear. Overlap of two sketches approximates how
//! structurally alike two queries are without parsing them.

use std::collections::BTreeSet;

/// Word items matched case-insensitively as whole alphanumeric tokens.
const WORD_VOCABULARY: [&str; 25] = [
    "SELECT", "WHERE", "GROUP", "HAVING", "ORDER", "DESC", "ASC", "LIMIT", "JOIN", "INTERSECT",
    "EXCEPT", "UNION", "NOT", "IN", "OR", "AND", "BETWEEN", "EXISTS", "LIKE", "DISTINCT", "COUNT",
    "AVG", "MIN", "MAX", "SUM",
];

/// Operator items matched as bare characters; ">=" contributes both ">" and
/// "=", and "!" on its own covers "!=".
const SYMBOL_VOCABULARY: [char; 7] = ['*', '=', '>', '<', '!', '+', '-'];

/// The sketch of `sql`: the set of vocabulary items present. Membership
/// only; repeats do not count twice.
pub fn sketch_keywords(sql: &str) -> BTreeSet<&'static str> {
    let mut found = BTreeSet::new();
    for token in sql.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        for word in WORD_VOCABULARY {
            if token.eq_ignore_ascii_case(word) {
                found.insert(word);
            }
        }
    }
    for symbol in SYMBOL_VOCABULARY {
        if sql.contains(symbol) {
            found.insert(symbol_name(symbol));
        }
    }
    found
}

fn symbol_name(symbol: char) -> &'static str {
    match symbol {
        '*' => "*",
        '=' => "=",
        '>' => ">",
        '<' => "<",
        '!' => "!",
        '+' => "+",
        '-' => "-",
        _ => unreachable!("not in the symbol vocabulary"),
    }
}

/// Size of the sketch intersection of two SQL strings.
pub fn sketch_similarity(y_t: &str, y_i: &str) -> usize {
    sketch_keywords(y_t)
        .intersection(&sketch_keywords(y_i))
        .count()
}
