//! HTML clean-up into the token stream fed to extraction.
//!
//! A page is parsed with an error-recovering tokenizer and tree builder, the
//! `<body>` subtree is selected, and its content is rendered as
//! space-separated tokens:
//!
//! * `script`, `style` and `img` elements disappear along with their content,
//! * comments disappear,
//! * structural tags we keep (`div`, `p`, `h1`..`h6`, `ul`, `li`) become
//!   literal `<p>` / `</p>` tokens,
//! * every other tag becomes `<start>` (open) or `<end>` (close),
//! * text is kept with whitespace runs collapsed to a single space.
//!
//! Attributes are dropped. Every character of visible text keeps a pointer to
//! the raw bytes it came from, so a span found in the clean text can be cut
//! back out of the original page.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::content_hash;

pub const START_TOKEN: &str = "<start>";
pub const END_TOKEN: &str = "<end>";

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link", "meta", "param",
    "source", "track", "wbr",
];

const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style"];

// Start tags that close an open <p> in button scope.
const CLOSES_P: &[&str] = &[
    "address", "article", "aside", "blockquote", "dd", "details", "dialog", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hgroup", "hr", "li", "main", "menu", "nav", "ol", "p", "pre", "section", "table",
    "ul",
];

const SCOPE_BOUNDARIES: &[&str] = &[
    "applet", "button", "caption", "html", "marquee", "object", "table", "td", "template", "th",
];

/// Which tags survive as literal tokens and which are dropped with their content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagPolicy {
    pub kept_tags: BTreeSet<String>,
    pub removed_tags: BTreeSet<String>,
    pub boundary_open_token: String,
    pub boundary_close_token: String,
}

impl Default for TagPolicy {
    fn default() -> Self {
        let kept = ["div", "p", "h1", "h2", "h3", "h4", "h5", "h6", "ul", "li"];
        Self {
            kept_tags: kept.iter().map(|s| s.to_string()).collect(),
            removed_tags: ["script", "style", "img"].iter().map(|s| s.to_string()).collect(),
            boundary_open_token: START_TOKEN.into(),
            boundary_close_token: END_TOKEN.into(),
        }
    }
}

impl TagPolicy {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.kept_tags.intersection(&self.removed_tags).next() {
            return Err(Error::Config(format!("tag {t:?} is both kept and removed")));
        }
        if self.boundary_open_token.is_empty() || self.boundary_close_token.is_empty() {
            return Err(Error::Config("boundary tokens must be non-empty".into()));
        }
        Ok(())
    }

    /// Every markup token the normalizer can emit; the QA model's added vocabulary.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .kept_tags
            .iter()
            .flat_map(|t| [format!("<{t}>"), format!("</{t}>")])
            .collect();
        v.push(self.boundary_open_token.clone());
        v.push(self.boundary_close_token.clone());
        v
    }
}

/// Decoded page: one entry per character with the raw byte offset it starts at.
#[derive(Debug, Clone)]
struct Source {
    chars: Vec<char>,
    // offs[i] = raw byte offset of chars[i]; offs[chars.len()] = raw length
    offs: Vec<usize>,
}

impl Source {
    fn decode(raw: &[u8]) -> Self {
        let mut chars = Vec::with_capacity(raw.len());
        let mut offs = Vec::with_capacity(raw.len() + 1);
        if let Ok(s) = std::str::from_utf8(raw) {
            for (i, c) in s.char_indices() {
                offs.push(i);
                chars.push(c);
            }
        } else if declares_single_byte_charset(raw) {
            for (i, &b) in raw.iter().enumerate() {
                offs.push(i);
                chars.push(char::from(b));
            }
        } else {
            let mut pos = 0;
            for chunk in raw.utf8_chunks() {
                for (i, c) in chunk.valid().char_indices() {
                    offs.push(pos + i);
                    chars.push(c);
                }
                pos += chunk.valid().len();
                if !chunk.invalid().is_empty() {
                    offs.push(pos);
                    chars.push(char::REPLACEMENT_CHARACTER);
                    pos += chunk.invalid().len();
                }
            }
        }
        offs.push(raw.len());
        Source { chars, offs }
    }

    fn raw_range(&self, r: &Range<usize>) -> Range<usize> {
        self.offs[r.start]..self.offs[r.end]
    }

    fn starts_with_ci(&self, at: usize, pat: &str) -> bool {
        let mut i = at;
        for p in pat.chars() {
            match self.chars.get(i) {
                Some(c) if c.to_ascii_lowercase() == p => i += 1,
                _ => return false,
            }
        }
        true
    }
}

fn declares_single_byte_charset(raw: &[u8]) -> bool {
    let head = &raw[..raw.len().min(2048)];
    let lower: Vec<u8> = head.iter().map(|b| b.to_ascii_lowercase()).collect();
    let Some(pos) = lower.windows(8).position(|w| w == b"charset=") else {
        return false;
    };
    let rest: Vec<u8> = lower[pos + 8..]
        .iter()
        .copied()
        .skip_while(|b| *b == b'"' || *b == b'\'')
        .take_while(|b| b.is_ascii_alphanumeric() || *b == b'-' || *b == b'_')
        .collect();
    matches!(
        rest.as_slice(),
        b"iso-8859-1" | b"latin1" | b"latin-1" | b"windows-1252" | b"cp1252" | b"us-ascii"
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokenKind {
    Text,
    StartTag { name: String, self_closing: bool },
    EndTag { name: String },
    Comment,
    RawText,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    span: Range<usize>,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == ':' || c == '_'
}

fn tokenize(src: &Source) -> Vec<Token> {
    let cs = &src.chars;
    let n = cs.len();
    let mut out = Vec::new();
    let mut i = 0;
    let mut text_start = 0;

    let flush_text = |out: &mut Vec<Token>, from: usize, to: usize| {
        if to > from {
            out.push(Token {
                kind: TokenKind::Text,
                span: from..to,
            });
        }
    };

    while i < n {
        if cs[i] != '<' {
            i += 1;
            continue;
        }
        let next = cs.get(i + 1).copied();
        // comment or bogus comment
        if src.starts_with_ci(i, "<!--") {
            flush_text(&mut out, text_start, i);
            let mut j = i + 4;
            // "<!-->" and "<!--->" are complete (empty) comments
            let end = if cs.get(j) == Some(&'>') {
                j + 1
            } else if cs.get(j) == Some(&'-') && cs.get(j + 1) == Some(&'>') {
                j + 2
            } else {
                loop {
                    if j + 3 > n {
                        break n;
                    }
                    if cs[j] == '-' && cs[j + 1] == '-' && cs[j + 2] == '>' {
                        break j + 3;
                    }
                    j += 1;
                }
            };
            out.push(Token {
                kind: TokenKind::Comment,
                span: i..end,
            });
            i = end;
            text_start = i;
            continue;
        }
        if matches!(next, Some('!') | Some('?')) {
            flush_text(&mut out, text_start, i);
            let end = cs[i..].iter().position(|&c| c == '>').map_or(n, |p| i + p + 1);
            out.push(Token {
                kind: TokenKind::Comment,
                span: i..end,
            });
            i = end;
            text_start = i;
            continue;
        }
        let is_end = next == Some('/');
        let name_at = if is_end { i + 2 } else { i + 1 };
        if !cs.get(name_at).is_some_and(|c| c.is_ascii_alphabetic()) {
            // a lone '<' is text
            i += 1;
            continue;
        }
        let mut j = name_at;
        while j < n && is_name_char(cs[j]) {
            j += 1;
        }
        let name: String = cs[name_at..j].iter().collect::<String>().to_ascii_lowercase();
        // attributes, honoring quotes
        let mut quote: Option<char> = None;
        let mut close = None;
        let mut k = j;
        while k < n {
            let c = cs[k];
            match quote {
                Some(q) if c == q => quote = None,
                Some(_) => {}
                None if c == '"' || c == '\'' => {
                    // only a quote opening an attribute value counts
                    let prev = cs[j..k].iter().rev().find(|c| !c.is_whitespace());
                    if prev == Some(&'=') {
                        quote = Some(c);
                    }
                }
                None if c == '>' => {
                    close = Some(k);
                    break;
                }
                None => {}
            }
            k += 1;
        }
        flush_text(&mut out, text_start, i);
        let Some(gt) = close else {
            // EOF inside a tag: the partial tag is dropped
            text_start = n;
            break;
        };
        let self_closing = !is_end && gt > j && cs[gt - 1] == '/';
        let span = i..gt + 1;
        i = gt + 1;
        text_start = i;
        if is_end {
            out.push(Token {
                kind: TokenKind::EndTag { name },
                span,
            });
            continue;
        }
        let raw_text = RAW_TEXT_ELEMENTS.contains(&name.as_str()) && !self_closing;
        out.push(Token {
            kind: TokenKind::StartTag {
                name: name.clone(),
                self_closing,
            },
            span,
        });
        if raw_text {
            let closing = format!("</{name}");
            let mut m = i;
            while m < n && !(cs[m] == '<' && src.starts_with_ci(m, &closing)) {
                m += 1;
            }
            if m > i {
                out.push(Token {
                    kind: TokenKind::RawText,
                    span: i..m,
                });
            }
            i = m;
            text_start = m;
        }
    }
    flush_text(&mut out, text_start, n);
    out
}

#[derive(Debug, Clone)]
enum Node {
    Element(Element),
    Text(Range<usize>),
    Comment,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    open: Range<usize>,
    close: Option<Range<usize>>,
    void: bool,
    children: Vec<Node>,
}

impl Element {
    fn root(len: usize) -> Self {
        Element {
            name: String::new(),
            open: 0..0,
            close: Some(len..len),
            void: false,
            children: Vec::new(),
        }
    }
}

struct TreeBuilder {
    stack: Vec<Element>,
}

impl TreeBuilder {
    fn pop(&mut self) {
        let el = self.stack.pop().expect("root never popped");
        self.stack
            .last_mut()
            .expect("root never popped")
            .children
            .push(Node::Element(el));
    }

    /// Index (in the stack) of the nearest open `names` element, not crossing `boundaries`.
    fn in_scope(&self, names: &[&str], boundaries: &[&str]) -> Option<usize> {
        for (idx, el) in self.stack.iter().enumerate().skip(1).rev() {
            if names.contains(&el.name.as_str()) {
                return Some(idx);
            }
            if boundaries.contains(&el.name.as_str()) {
                return None;
            }
        }
        None
    }

    fn pop_to(&mut self, idx: usize) {
        while self.stack.len() > idx {
            self.pop();
        }
    }

    fn start(&mut self, name: String, self_closing: bool, span: Range<usize>) {
        let n = name.as_str();
        if CLOSES_P.contains(&n) {
            if let Some(idx) = self.in_scope(&["p"], SCOPE_BOUNDARIES) {
                self.pop_to(idx);
            }
        }
        let implied: Option<(&[&str], &[&str])> = match n {
            "li" => Some((&["li"], &["ol", "ul", "table", "td", "th", "html"])),
            "dd" | "dt" => Some((&["dd", "dt"], &["dl", "table", "td", "th", "html"])),
            "tr" => Some((&["tr", "td", "th"], &["table", "html"])),
            "td" | "th" => Some((&["td", "th"], &["tr", "table", "html"])),
            "option" => Some((&["option"], &["select", "html"])),
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                let top = self.stack.last().map(|e| e.name.as_str()).unwrap_or("");
                if matches!(top, "h1" | "h2" | "h3" | "h4" | "h5" | "h6") {
                    self.pop();
                }
                None
            }
            _ => None,
        };
        if let Some((names, bounds)) = implied {
            if let Some(idx) = self.in_scope(names, bounds) {
                self.pop_to(idx);
            }
        }
        let void = self_closing || VOID_ELEMENTS.contains(&n);
        let el = Element {
            name,
            open: span,
            close: None,
            void,
            children: Vec::new(),
        };
        if void {
            self.stack.last_mut().unwrap().children.push(Node::Element(el));
        } else {
            self.stack.push(el);
        }
    }

    fn end(&mut self, name: &str, span: Range<usize>) {
        let found = self
            .stack
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .find(|(_, e)| e.name == name)
            .map(|(i, _)| i);
        // stray end tags are ignored
        if let Some(idx) = found {
            self.pop_to(idx + 1);
            self.stack.last_mut().unwrap().close = Some(span);
            self.pop();
        }
    }

    fn push_leaf(&mut self, node: Node) {
        self.stack.last_mut().unwrap().children.push(node);
    }
}

/// A parsed page with its recovered element tree.
#[derive(Debug, Clone)]
pub struct HtmlDocument {
    src: Source,
    raw_len: usize,
    root: Element,
}

impl HtmlDocument {
    /// Tolerant parse; never fails.
    pub fn parse(raw: &[u8]) -> Self {
        let src = Source::decode(raw);
        let tokens = tokenize(&src);
        let mut tb = TreeBuilder {
            stack: vec![Element::root(src.chars.len())],
        };
        for t in tokens {
            match t.kind {
                TokenKind::Text | TokenKind::RawText => tb.push_leaf(Node::Text(t.span)),
                TokenKind::Comment => tb.push_leaf(Node::Comment),
                TokenKind::StartTag { name, self_closing } => tb.start(name, self_closing, t.span),
                TokenKind::EndTag { name } => tb.end(&name, t.span),
            }
        }
        while tb.stack.len() > 1 {
            tb.pop();
        }
        let root = tb.stack.pop().unwrap();
        HtmlDocument {
            src,
            raw_len: raw.len(),
            root,
        }
    }

    /// The `<body>` subtree, or the whole document when there is none.
    pub fn body(&self) -> Subtree<'_> {
        fn find(el: &Element) -> Option<&Element> {
            for c in &el.children {
                if let Node::Element(e) = c {
                    if e.name == "body" {
                        return Some(e);
                    }
                    if let Some(b) = find(e) {
                        return Some(b);
                    }
                }
            }
            None
        }
        Subtree {
            doc: self,
            el: find(&self.root).unwrap_or(&self.root),
        }
    }
}

pub fn extract_body(doc: &HtmlDocument) -> Subtree<'_> {
    doc.body()
}

/// Handle on an element of a parsed document; its content is what gets normalized.
#[derive(Debug, Clone, Copy)]
pub struct Subtree<'a> {
    doc: &'a HtmlDocument,
    el: &'a Element,
}

impl Subtree<'_> {
    pub fn is_document(&self) -> bool {
        std::ptr::eq(self.el, &self.doc.root)
    }

    /// Raw bytes between the element's open tag and its close (or its last descendant).
    pub fn inner_raw_range(&self) -> Range<usize> {
        fn last_end(el: &Element) -> usize {
            match el.children.last() {
                Some(Node::Element(e)) => e
                    .close
                    .as_ref()
                    .map(|c| c.end)
                    .unwrap_or_else(|| last_end(e).max(e.open.end)),
                Some(Node::Text(r)) => r.end,
                Some(Node::Comment) | None => el.open.end,
            }
        }
        let start = self.el.open.end;
        let end = match &self.el.close {
            Some(c) => c.start,
            None => last_end(self.el),
        };
        let src = &self.doc.src;
        src.offs[start]..src.offs[end.max(start)]
    }

    /// Text content with whitespace collapsed (markup and scripts excluded).
    pub fn text(&self) -> String {
        fn walk(el: &Element, src: &Source, out: &mut Vec<String>) {
            for c in &el.children {
                match c {
                    Node::Element(e) if !RAW_TEXT_ELEMENTS.contains(&e.name.as_str()) => {
                        walk(e, src, out)
                    }
                    Node::Text(r) => {
                        let s: String = src.chars[r.clone()].iter().collect();
                        let s = collapse_ws(&s);
                        if !s.is_empty() {
                            out.push(s);
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut parts = Vec::new();
        walk(self.el, &self.doc.src, &mut parts);
        parts.join(" ")
    }

    /// Re-serialize the recovered tree (attributes dropped, all elements explicitly closed).
    pub fn serialize(&self) -> String {
        fn walk(el: &Element, src: &Source, out: &mut String) {
            for c in &el.children {
                match c {
                    Node::Element(e) => {
                        out.push('<');
                        out.push_str(&e.name);
                        out.push('>');
                        if !e.void {
                            walk(e, src, out);
                            out.push_str("</");
                            out.push_str(&e.name);
                            out.push('>');
                        }
                    }
                    Node::Text(r) => out.extend(src.chars[r.clone()].iter()),
                    Node::Comment => {}
                }
            }
        }
        let mut out = String::new();
        walk(self.el, &self.doc.src, &mut out);
        out
    }

    /// Elements (outside removed subtrees) that render as a boundary open token
    /// but were closed implicitly or never closed.
    pub fn unclosed_boundaries(&self, policy: &TagPolicy) -> usize {
        fn walk(el: &Element, policy: &TagPolicy) -> usize {
            el.children
                .iter()
                .map(|c| match c {
                    Node::Element(e) if policy.removed_tags.contains(&e.name) => 0,
                    Node::Element(e) => {
                        let own = usize::from(
                            !policy.kept_tags.contains(&e.name) && !e.void && e.close.is_none(),
                        );
                        own + walk(e, policy)
                    }
                    _ => 0,
                })
                .sum()
        }
        walk(self.el, policy)
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse::<u32>().ok()?
        };
        return Some(char::from_u32(code).unwrap_or(char::REPLACEMENT_CHARACTER));
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "copy" => '©',
        "reg" => '®',
        "trade" => '™',
        "ndash" => '–',
        "mdash" => '—',
        "hellip" => '…',
        "laquo" => '«',
        "raquo" => '»',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ldquo" => '“',
        "rdquo" => '”',
        "middot" => '·',
        "bull" => '•',
        "deg" => '°',
        "eacute" => 'é',
        "egrave" => 'è',
        "aacute" => 'á',
        "oacute" => 'ó',
        "uuml" => 'ü',
        "ouml" => 'ö',
        "auml" => 'ä',
        "szlig" => 'ß',
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Visible text copied from the page.
    Text,
    /// A kept tag or boundary token standing for a raw tag.
    Markup,
}

/// One entry of the clean→raw offset map. Clean offsets are characters,
/// raw offsets are bytes; both ranges are half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub clean: Range<usize>,
    pub raw: Range<usize>,
    pub kind: SegmentKind,
}

impl Serialize for Segment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (
            [self.clean.start, self.clean.end],
            [self.raw.start, self.raw.end],
            self.kind,
        )
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Segment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (c, r, kind): ([usize; 2], [usize; 2], SegmentKind) = Deserialize::deserialize(d)?;
        if c[0] > c[1] || r[0] > r[1] {
            return Err(serde::de::Error::custom("inverted range in offset map"));
        }
        Ok(Segment {
            clean: c[0]..c[1],
            raw: r[0]..r[1],
            kind,
        })
    }
}

/// Normalized page text plus its map back into the raw bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub text: String,
    pub offset_map: Vec<Segment>,
    pub source_url: String,
    pub source_hash: String,
}

struct Builder {
    text: String,
    len: usize,
    segments: Vec<Segment>,
}

impl Builder {
    fn separate(&mut self) {
        if self.len > 0 {
            self.text.push(' ');
            self.len += 1;
        }
    }

    fn markup(&mut self, token: &str, raw: Range<usize>) {
        self.separate();
        let n = token.chars().count();
        self.text.push_str(token);
        self.segments.push(Segment {
            clean: self.len..self.len + n,
            raw,
            kind: SegmentKind::Markup,
        });
        self.len += n;
    }

    /// `pieces`: (clean char, raw byte range, copied verbatim)
    fn text(&mut self, pieces: &[(char, Range<usize>, bool)]) {
        if pieces.is_empty() {
            return;
        }
        self.separate();
        let mut open: Option<usize> = None; // index of a mergeable segment
        for (c, raw, verbatim) in pieces {
            self.text.push(*c);
            let at = self.len;
            self.len += 1;
            if *verbatim {
                if let Some(i) = open {
                    let seg = &mut self.segments[i];
                    if seg.raw.end == raw.start {
                        seg.clean.end = self.len;
                        seg.raw.end = raw.end;
                        continue;
                    }
                }
            }
            self.segments.push(Segment {
                clean: at..at + 1,
                raw: raw.clone(),
                kind: SegmentKind::Text,
            });
            open = verbatim.then_some(self.segments.len() - 1);
        }
    }
}

fn text_pieces(src: &Source, r: &Range<usize>) -> Vec<(char, Range<usize>, bool)> {
    // entity decoding
    let mut decoded: Vec<(char, Range<usize>, bool)> = Vec::new();
    let cs = &src.chars;
    let mut i = r.start;
    while i < r.end {
        let c = cs[i];
        if c == '&' {
            let limit = (i + 12).min(r.end);
            if let Some(semi) = (i + 1..limit).find(|&k| cs[k] == ';') {
                let name: String = cs[i + 1..semi].iter().collect();
                if let Some(d) = decode_entity(&name) {
                    decoded.push((d, src.offs[i]..src.offs[semi + 1], false));
                    i = semi + 1;
                    continue;
                }
            }
        }
        let raw = src.offs[i]..src.offs[i + 1];
        let verbatim = raw.len() == c.len_utf8();
        decoded.push((c, raw, verbatim));
        i += 1;
    }
    // whitespace collapsing; a run keeps its first raw character as anchor
    let mut out: Vec<(char, Range<usize>, bool)> = Vec::with_capacity(decoded.len());
    let mut k = 0;
    while k < decoded.len() {
        let (c, raw, verbatim) = &decoded[k];
        if c.is_whitespace() {
            let mut e = k + 1;
            while e < decoded.len() && decoded[e].0.is_whitespace() {
                e += 1;
            }
            out.push((' ', raw.clone(), *c == ' ' && *verbatim));
            k = e;
        } else {
            out.push((*c, raw.clone(), *verbatim));
            k += 1;
        }
    }
    while out.first().is_some_and(|p| p.0 == ' ') {
        out.remove(0);
    }
    while out.last().is_some_and(|p| p.0 == ' ') {
        out.pop();
    }
    out
}

fn emit(el: &Element, src: &Source, policy: &TagPolicy, b: &mut Builder) {
    for child in &el.children {
        match child {
            Node::Text(r) => b.text(&text_pieces(src, r)),
            Node::Comment => {}
            Node::Element(e) => {
                if policy.removed_tags.contains(&e.name) {
                    continue;
                }
                let open_raw = src.raw_range(&e.open);
                if policy.kept_tags.contains(&e.name) {
                    b.markup(&format!("<{}>", e.name), open_raw.clone());
                    emit(e, src, policy, b);
                    if let Some(c) = &e.close {
                        b.markup(&format!("</{}>", e.name), src.raw_range(c));
                    } else if e.void {
                        b.markup(&format!("</{}>", e.name), open_raw.end..open_raw.end);
                    }
                } else {
                    b.markup(&policy.boundary_open_token, open_raw.clone());
                    emit(e, src, policy, b);
                    if let Some(c) = &e.close {
                        b.markup(&policy.boundary_close_token, src.raw_range(c));
                    } else if e.void {
                        b.markup(&policy.boundary_close_token, open_raw.end..open_raw.end);
                    }
                }
            }
        }
    }
}

/// Normalize a raw page into a [`CleanDocument`].
pub fn normalize(raw_html: &[u8], policy: &TagPolicy) -> CleanDocument {
    let doc = HtmlDocument::parse(raw_html);
    normalize_document(&doc, raw_html, policy)
}

pub fn normalize_document(doc: &HtmlDocument, raw_html: &[u8], policy: &TagPolicy) -> CleanDocument {
    debug_assert_eq!(doc.raw_len, raw_html.len());
    let body = doc.body();
    let mut b = Builder {
        text: String::new(),
        len: 0,
        segments: Vec::new(),
    };
    emit(body.el, &doc.src, policy, &mut b);
    CleanDocument {
        text: b.text,
        offset_map: b.segments,
        source_url: String::new(),
        source_hash: content_hash(raw_html),
    }
}

impl CleanDocument {
    /// Rebuild visibility from clean text alone: words in the policy vocabulary
    /// are markup, everything between them is one text run. Raw ranges mirror
    /// clean ones and the source hash is empty, so such documents cannot project.
    pub fn from_clean_text(text: &str, policy: &TagPolicy) -> Self {
        let vocab: BTreeSet<String> = policy.vocabulary().into_iter().collect();
        let mut segments: Vec<Segment> = Vec::new();
        let mut pos = 0;
        for (i, word) in text.split(' ').enumerate() {
            if i > 0 {
                pos += 1;
            }
            let len = word.chars().count();
            if len == 0 {
                continue;
            }
            let kind = if vocab.contains(word) {
                SegmentKind::Markup
            } else {
                SegmentKind::Text
            };
            match segments.last_mut() {
                Some(s) if kind == SegmentKind::Text && s.kind == SegmentKind::Text => {
                    s.clean.end = pos + len;
                    s.raw.end = pos + len;
                }
                _ => segments.push(Segment {
                    clean: pos..pos + len,
                    raw: pos..pos + len,
                    kind,
                }),
            }
            pos += len;
        }
        CleanDocument {
            text: text.to_string(),
            offset_map: segments,
            source_url: String::new(),
            source_hash: String::new(),
        }
    }

    pub fn with_source_url(mut self, url: impl Into<String>) -> Self {
        self.source_url = url.into();
        self
    }

    pub fn char_len(&self) -> usize {
        self.offset_map
            .last()
            .map(|s| s.clean.end)
            .unwrap_or(0)
            .max(self.text.chars().count())
    }

    /// Substring by character range. Panics on out-of-range input.
    pub fn slice(&self, r: Range<usize>) -> &str {
        let start = self.byte_at(r.start);
        let end = self.byte_at(r.end);
        &self.text[start..end]
    }

    fn byte_at(&self, ch: usize) -> usize {
        self.text
            .char_indices()
            .nth(ch)
            .map(|(b, _)| b)
            .unwrap_or_else(|| {
                assert!(ch <= self.text.chars().count(), "char offset out of range");
                self.text.len()
            })
    }

    /// Maximal runs of visible text (one per text token), as clean char ranges.
    pub fn text_runs(&self) -> Vec<Range<usize>> {
        let mut runs: Vec<Range<usize>> = Vec::new();
        for s in self.offset_map.iter().filter(|s| s.kind == SegmentKind::Text) {
            match runs.last_mut() {
                Some(r) if r.end == s.clean.start => r.end = s.clean.end,
                _ => runs.push(s.clean.clone()),
            }
        }
        runs
    }

    /// Per clean character: does it belong to visible text?
    pub fn visible_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.char_len()];
        for s in self.offset_map.iter().filter(|s| s.kind == SegmentKind::Text) {
            mask[s.clean.clone()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// Whether `r` lies inside a single visible-text run.
    pub fn is_visible(&self, r: &Range<usize>) -> bool {
        if r.start >= r.end {
            return false;
        }
        self.text_runs()
            .iter()
            .any(|run| run.start <= r.start && r.end <= run.end)
    }

    /// Text tokens only, joined by single spaces.
    pub fn visible_text(&self) -> String {
        self.text_runs()
            .into_iter()
            .map(|r| self.slice(r).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Map a clean character range to raw bytes of the page it came from.
    pub fn project_span(&self, raw: &[u8], r: Range<usize>) -> Result<(Range<usize>, String)> {
        if r.start > r.end || r.end > self.char_len() {
            return Err(Error::Precondition(format!(
                "clean range {r:?} outside document of {} chars",
                self.char_len()
            )));
        }
        if content_hash(raw) != self.source_hash {
            return Err(Error::Integrity(format!(
                "raw bytes do not match source hash {}",
                self.source_hash
            )));
        }
        let texts: Vec<&Segment> = self
            .offset_map
            .iter()
            .filter(|s| s.kind == SegmentKind::Text)
            .collect();
        if r.is_empty() {
            let at = texts
                .iter()
                .find(|s| s.clean.start <= r.start && r.start <= s.clean.end)
                .map(|s| self.raw_offset(s, r.start))
                .unwrap_or(0);
            return Ok((at..at, String::new()));
        }
        let hit: Vec<&&Segment> = texts
            .iter()
            .filter(|s| s.clean.start < r.end && s.clean.end > r.start)
            .collect();
        let (Some(first), Some(last)) = (hit.first(), hit.last()) else {
            return Err(Error::NotProjectable(format!(
                "{r:?} covers only synthetic tokens"
            )));
        };
        let start = self.raw_offset(first, r.start.max(first.clean.start));
        let end = self.raw_offset(last, r.end.min(last.clean.end));
        let range = start..end;
        let text = String::from_utf8_lossy(&raw[range.clone()]).into_owned();
        Ok((range, text))
    }

    // raw byte position of clean char `at` within (or at the end of) segment `s`
    fn raw_offset(&self, s: &Segment, at: usize) -> usize {
        if at <= s.clean.start {
            return s.raw.start;
        }
        if at >= s.clean.end {
            return s.raw.end;
        }
        // only verbatim segments are longer than one char; their bytes equal the clean text
        let prefix = self.slice(s.clean.start..at);
        s.raw.start + prefix.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> String {
        normalize(s.as_bytes(), &TagPolicy::default()).text
    }

    #[test]
    fn deskadena_begin_date() {
        let raw = r#"<dd class="begin-date">1997<!---->(25 years ago)</dd>"#;
        assert_eq!(norm(raw), "<start> 1997 (25 years ago) <end>");
    }

    #[test]
    fn visibility_from_clean_text() {
        let policy = TagPolicy::default();
        let d = normalize(b"<div><p>Study Type : Observational</p><b>x</b></div>", &policy);
        let r = CleanDocument::from_clean_text(&d.text, &policy);
        assert_eq!(r.visible_mask(), d.visible_mask());
        assert_eq!(r.visible_text(), "Study Type : Observational x");
    }

    #[test]
    fn removed_and_kept_tags() {
        assert_eq!(norm("<script>var a=1;</script><p>hi</p>"), "<p> hi </p>");
        assert_eq!(
            norm("<ul><li>a</li><li>b</li></ul>"),
            "<ul> <li> a </li> <li> b </li> </ul>"
        );
        assert_eq!(norm("<style>p{}</style><img src=x.png alt='hi'>x"), "x");
        assert_eq!(norm("<br/>x<br>"), "<start> <end> x <start> <end>");
    }

    #[test]
    fn body_extraction() {
        let doc = HtmlDocument::parse(b"<html><head><title>t</title></head><body><p>x</p></body></html>");
        let body = extract_body(&doc);
        assert!(!body.is_document());
        let raw = b"<html><head><title>t</title></head><body><p>x</p></body></html>";
        assert_eq!(&raw[body.inner_raw_range()], b"<p>x</p>");
        assert_eq!(body.serialize(), "<p>x</p>");

        let doc = HtmlDocument::parse(b"<p>no body</p>");
        assert!(doc.body().is_document());
        assert_eq!(doc.body().text(), "no body");

        let doc = HtmlDocument::parse(b"<body><div><p>a</div>");
        let body = doc.body();
        assert_eq!(body.serialize(), "<div><p>a</p></div>");
        assert!(body.text().contains('a'));
    }

    #[test]
    fn attributes_with_gt_inside_quotes() {
        assert_eq!(norm(r#"<a title="x > y" href='/'>link</a>"#), "<start> link <end>");
    }

    #[test]
    fn entities_and_whitespace() {
        let d = normalize(b"<p>  a &amp;\n\n b&nbsp;c </p>", &TagPolicy::default());
        assert_eq!(d.text, "<p> a & b c </p>");
        assert_eq!(d.visible_text(), "a & b c");
    }

    #[test]
    fn project_deskadena_year() {
        let raw = br#"<dd class="begin-date">1997<!---->(25 years ago)</dd>"#;
        let d = normalize(raw, &TagPolicy::default());
        let at = d.text.find("1997").unwrap();
        let (r, s) = d.project_span(raw, at..at + 4).unwrap();
        assert_eq!(s, "1997");
        assert_eq!(r, 23..27);
        let (r, s) = d.project_span(raw, at..at).unwrap();
        assert!(r.is_empty() && s.is_empty());
        assert!(matches!(
            d.project_span(raw, 0..7),
            Err(Error::NotProjectable(_))
        ));
        assert!(matches!(
            d.project_span(b"tampered", at..at + 4),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn offsets_through_entities_and_multibyte() {
        let raw = "<p>Zürich &amp; Genève</p>".as_bytes();
        let d = normalize(raw, &TagPolicy::default());
        assert_eq!(d.text, "<p> Zürich & Genève </p>");
        let start = 4;
        let end = d.text.chars().count() - 5;
        let (r, s) = d.project_span(raw, start..end).unwrap();
        assert_eq!(s, "Zürich &amp; Genève");
        assert_eq!(norm(&s), d.slice(start..end));
        assert_eq!(r.start, 3);
    }

    #[test]
    fn latin1_pages_keep_byte_offsets() {
        let raw = b"<meta charset=\"iso-8859-1\"><p>caf\xe9 x</p>";
        let d = normalize(raw, &TagPolicy::default());
        assert!(d.text.contains("café x"));
        let at = d.text.chars().position(|c| c == 'x').unwrap();
        let (r, _) = d.project_span(raw, at..at + 1).unwrap();
        assert_eq!(&raw[r], b"x");
    }

    #[test]
    fn unclosed_and_stray_tags() {
        assert_eq!(norm("<span>a"), "<start> a");
        assert_eq!(norm("a</span>b"), "a b");
        assert_eq!(norm("<p>a<p>b"), "<p> a <p> b");
        // truncated tag at EOF is dropped
        assert_eq!(norm("x <span class="), "x");
        assert_eq!(norm("1 < 2"), "1 < 2");
        assert_eq!(norm("<!DOCTYPE html><!-- c -->t"), "t");
    }

    #[test]
    fn unclosed_script_swallows_rest() {
        assert_eq!(norm("<p>a</p><script>if (x < y) { secret }"), "<p> a </p>");
        assert_eq!(norm("<script>a</SCRIPT>b"), "b");
    }

    #[test]
    fn clean_document_json_shape() {
        let d = normalize(b"<b>x</b>", &TagPolicy::default()).with_source_url("https://x.test/1");
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["text"], "<start> x <end>");
        assert_eq!(v["offset_map"][0], serde_json::json!([[0, 7], [0, 3], "markup"]));
        assert_eq!(v["offset_map"][1], serde_json::json!([[8, 9], [3, 4], "text"]));
        let back: CleanDocument = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn vocabulary_covers_policy() {
        let v = TagPolicy::default().vocabulary();
        assert!(v.contains(&"<h6>".to_string()));
        assert!(v.contains(&"</li>".to_string()));
        assert!(v.contains(&START_TOKEN.to_string()));
        assert_eq!(v.len(), 22);
    }
}
