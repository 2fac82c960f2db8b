//! Brute-force language enumerations sharing no code with the counter machines.

use std::collections::BTreeSet;

/// Every string over `symbols` of length at most `max`.
pub fn all_strings(symbols: &[char], max: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max {
        let mut next = Vec::with_capacity(frontier.len() * symbols.len());
        for s in &frontier {
            for &c in symbols {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Least fixpoint of `S -> "" | open S close | S S`, truncated at `max` characters.
pub fn dyck_by_grammar(open: char, close: char, max: usize) -> BTreeSet<String> {
    let mut lang: BTreeSet<String> = [String::new()].into();
    loop {
        let current: Vec<String> = lang.iter().cloned().collect();
        let mut added = false;
        for a in &current {
            if a.len() + 2 <= max {
                added |= lang.insert(format!("{open}{a}{close}"));
            }
            for b in &current {
                if a.len() + b.len() <= max {
                    added |= lang.insert(format!("{a}{b}"));
                }
            }
        }
        if !added {
            return lang;
        }
    }
}

/// Members of length up to `max` from the unambiguous grammar `S -> "" | ( S ) S`, by length.
pub fn dyck_by_length(max: usize) -> BTreeSet<String> {
    let mut by_len: Vec<Vec<String>> = vec![vec![String::new()]];
    for n in 1..=max {
        let mut words = Vec::new();
        if n % 2 == 0 {
            for inner in (0..=n - 2).step_by(2) {
                for a in &by_len[inner] {
                    for b in &by_len[n - 2 - inner] {
                        words.push(format!("({a}){b}"));
                    }
                }
            }
        }
        by_len.push(words);
    }
    by_len.into_iter().flatten().collect()
}

/// Interleavings by explicit choice of the positions taken by `u`.
pub fn interleavings(u: &str, v: &str) -> BTreeSet<String> {
    let (u, v): (Vec<char>, Vec<char>) = (u.chars().collect(), v.chars().collect());
    let n = u.len() + v.len();
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != u.len() {
            continue;
        }
        let (mut i, mut j) = (0, 0);
        let s: String = (0..n)
            .map(|p| {
                if mask >> p & 1 == 1 {
                    i += 1;
                    u[i - 1]
                } else {
                    j += 1;
                    v[j - 1]
                }
            })
            .collect();
        out.insert(s);
    }
    out
}

pub fn shuffle2_by_enumeration(max: usize) -> BTreeSet<String> {
    let round = dyck_by_grammar('(', ')', max);
    let square = dyck_by_grammar('[', ']', max);
    let mut out = BTreeSet::new();
    for u in &round {
        for v in square.iter().filter(|v| u.len() + v.len() <= max) {
            out.extend(interleavings(u, v));
        }
    }
    out
}

pub fn prefixes(lang: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in lang {
        for end in 0..=s.len() {
            out.insert(s[..end].to_string());
        }
    }
    out
}

pub fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

/// Running open-minus-close count, computed directly.
pub fn running_balance(s: &str) -> Vec<i64> {
    s.chars()
        .scan(0i64, |b, c| {
            *b += if c == '(' { 1 } else { -1 };
            Some(*b)
        })
        .collect()
}
