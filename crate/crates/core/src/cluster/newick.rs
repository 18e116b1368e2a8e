//! Newick serialization of dendrograms.

use super::upgma::Dendrogram;

fn needs_quotes(label: &str) -> bool {
    label.is_empty() || label.chars().any(|c| "()[]':;, \t\n".contains(c))
}

pub fn quote_label(label: &str) -> String {
    if needs_quotes(label) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Newick text with branch lengths equal to parent minus child height.
pub fn to_newick(dg: &Dendrogram) -> String {
    let mut out = String::new();
    if dg.merges.is_empty() {
        if let Some(l) = dg.labels.first() {
            out.push_str(&quote_label(l));
        }
        out.push(';');
        return out;
    }
    write_node(dg, dg.root(), &mut out);
    out.push(';');
    out
}

fn write_node(dg: &Dendrogram, node: usize, out: &mut String) {
    match dg.children(node) {
        None => out.push_str(&quote_label(&dg.labels[node])),
        Some((l, r)) => {
            out.push('(');
            for (i, child) in [l, r].into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_node(dg, child, out);
                out.push_str(&format!(":{}", dg.height(node) - dg.height(child)));
            }
            out.push(')');
        }
    }
}

/// Minimal parser used to check round trips: returns every leaf label with
/// its path length from the root, and every internal node's height above
/// its leftmost leaf.
#[cfg(test)]
pub(crate) fn parse_heights(text: &str) -> (Vec<String>, Vec<f64>) {
    struct P<'a> {
        s: &'a [u8],
        i: usize,
        leaves: Vec<String>,
        heights: Vec<f64>,
    }
    impl P<'_> {
        fn label(&mut self) -> String {
            if self.s[self.i] == b'\'' {
                self.i += 1;
                let mut out = Vec::new();
                loop {
                    if self.s[self.i] == b'\'' {
                        if self.s.get(self.i + 1) == Some(&b'\'') {
                            out.push(b'\'');
                            self.i += 2;
                            continue;
                        }
                        self.i += 1;
                        break;
                    }
                    out.push(self.s[self.i]);
                    self.i += 1;
                }
                String::from_utf8(out).unwrap()
            } else {
                let start = self.i;
                while !b":,);".contains(&self.s[self.i]) {
                    self.i += 1;
                }
                String::from_utf8(self.s[start..self.i].to_vec()).unwrap()
            }
        }
        fn length(&mut self) -> f64 {
            if self.s[self.i] != b':' {
                return 0.0;
            }
            self.i += 1;
            let start = self.i;
            while !b",);".contains(&self.s[self.i]) {
                self.i += 1;
            }
            std::str::from_utf8(&self.s[start..self.i]).unwrap().parse().unwrap()
        }
        // returns the node's height above its leaves
        fn node(&mut self) -> f64 {
            if self.s[self.i] != b'(' {
                let l = self.label();
                self.leaves.push(l);
                return 0.0;
            }
            self.i += 1;
            let mut h = None;
            loop {
                let child = self.node();
                let len = self.length();
                h.get_or_insert(child + len);
                if self.s[self.i] == b',' {
                    self.i += 1;
                    continue;
                }
                self.i += 1;
                break;
            }
            let h = h.unwrap();
            self.heights.push(h);
            h
        }
    }
    let mut p = P {
        s: text.as_bytes(),
        i: 0,
        leaves: Vec::new(),
        heights: Vec::new(),
    };
    p.node();
    assert_eq!(&p.s[p.i..], b";");
    (p.leaves, p.heights)
}
