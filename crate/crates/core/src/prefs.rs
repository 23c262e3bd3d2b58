//! Visualization preferences and their XML file form.
//!
//! ```xml
//! <preferences version="1">
//!   <colors>
//!     <send>#1f77b4</send>
//!     <receive>#2ca02c</receive>
//!     <forward>#ff7f0e</forward>
//!     <drop>#d62728</drop>
//!     <broadcast>#9467bd</broadcast>
//!     <nodeDefault>#000000</nodeDefault>
//!     <nodeGrayed>#b4b4b4</nodeGrayed>
//!     <background>#ffffff</background>
//!     <palette>               <!-- partition fill colors, in order -->
//!       <color>#e6194b</color>
//!       <color>#3cb44b</color>
//!     </palette>
//!   </colors>
//!   <terrain>                 <!-- meters -->
//!     <width>1000</width>
//!     <height>1000</height>
//!   </terrain>
//!   <radioRange>250</radioRange>
//!   <filters>
//!     <showRouting>true</showRouting>
//!     <showAgent>true</showAgent>
//!   </filters>
//!   <directories>
//!     <screenshotDir>screenshots</screenshotDir>
//!   </directories>
//!   <playback>
//!     <speed>1</speed>        <!-- multiplier, > 0 -->
//!   </playback>
//! </preferences>
//! ```
//!
//! Every element below the root is optional and falls back to its default.
//! Unknown elements are reported as warnings and otherwise ignored. The
//! `version` attribute is required.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use quick_xml::events::{BytesText, Event};
use quick_xml::{Reader, Writer};
use serde::{Deserialize, Serialize};

pub const PREFS_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix('#')
            .filter(|h| h.len() == 6 && h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| format!("expected #rrggbb, got `{s}`"))?;
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
        Ok(Rgb::new(byte(0), byte(2), byte(4)))
    }
}

impl From<Rgb> for String {
    fn from(c: Rgb) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Rgb {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Colors {
    pub send: Rgb,
    pub receive: Rgb,
    pub forward: Rgb,
    pub drop: Rgb,
    pub broadcast: Rgb,
    pub node_default: Rgb,
    pub node_grayed: Rgb,
    pub background: Rgb,
    pub palette: Vec<Rgb>,
}

impl Default for Colors {
    fn default() -> Self {
        Self {
            send: Rgb::new(0x1f, 0x77, 0xb4),
            receive: Rgb::new(0x2c, 0xa0, 0x2c),
            forward: Rgb::new(0xff, 0x7f, 0x0e),
            drop: Rgb::new(0xd6, 0x27, 0x28),
            broadcast: Rgb::new(0x94, 0x67, 0xbd),
            node_default: Rgb::new(0, 0, 0),
            node_grayed: Rgb::new(0xb4, 0xb4, 0xb4),
            background: Rgb::new(0xff, 0xff, 0xff),
            palette: vec![
                Rgb::new(0xe6, 0x19, 0x4b),
                Rgb::new(0x3c, 0xb4, 0x4b),
                Rgb::new(0x43, 0x63, 0xd8),
                Rgb::new(0xf5, 0x82, 0x31),
                Rgb::new(0x91, 0x1e, 0xb4),
                Rgb::new(0x46, 0xf0, 0xf0),
                Rgb::new(0xf0, 0x32, 0xe6),
                Rgb::new(0xbc, 0xf6, 0x0c),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub width: f64,
    pub height: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Self { width: 1000.0, height: 1000.0 }
    }
}

/// Layer filters. They only change what is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filters {
    pub show_routing: bool,
    pub show_agent: bool,
}

impl Default for Filters {
    fn default() -> Self {
        Self { show_routing: true, show_agent: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub colors: Colors,
    pub terrain: Terrain,
    pub radio_range: f64,
    pub filters: Filters,
    pub screenshot_dir: PathBuf,
    pub playback_speed: f64,
}

pub const DEFAULT_RADIO_RANGE: f64 = 250.0;

impl Default for Preferences {
    fn default() -> Self {
        Self {
            colors: Colors::default(),
            terrain: Terrain::default(),
            radio_range: DEFAULT_RADIO_RANGE,
            filters: Filters::default(),
            screenshot_dir: PathBuf::from("screenshots"),
            playback_speed: 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrefsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl PrefsError {
    fn field(path: &str, message: impl Into<String>) -> Self {
        PrefsError::Field { path: path.to_string(), message: message.into() }
    }
}

impl Preferences {
    /// Checks the numeric and list constraints, naming the offending element.
    pub fn validate(&self) -> Result<(), PrefsError> {
        let non_negative = |v: f64, path: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(PrefsError::field(path, format!("must be a finite number >= 0, got {v}")))
            }
        };
        non_negative(self.terrain.width, "preferences/terrain/width")?;
        non_negative(self.terrain.height, "preferences/terrain/height")?;
        non_negative(self.radio_range, "preferences/radioRange")?;
        if !(self.playback_speed.is_finite() && self.playback_speed > 0.0) {
            return Err(PrefsError::field(
                "preferences/playback/speed",
                format!("must be a finite number > 0, got {}", self.playback_speed),
            ));
        }
        if self.colors.palette.is_empty() {
            return Err(PrefsError::field("preferences/colors/palette", "must list at least one color"));
        }
        Ok(())
    }

    pub fn palette_color(&self, key: u32) -> Rgb {
        let p = &self.colors.palette;
        p[key as usize % p.len()]
    }
}

/// A parsed preferences document plus any warnings about ignored content.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedPrefs {
    pub prefs: Preferences,
    pub warnings: Vec<String>,
}

pub fn to_xml_string(p: &Preferences) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    write_document(&mut w, p).expect("writing to a Vec cannot fail");
    let mut s = String::from_utf8(w.into_inner()).expect("writer emits UTF-8");
    s.push('\n');
    s
}

fn write_document(w: &mut Writer<Vec<u8>>, p: &Preferences) -> io::Result<()> {
    fn leaf(w: &mut Writer<Vec<u8>>, name: &str, value: &str) -> io::Result<()> {
        w.create_element(name).write_text_content(BytesText::new(value))?;
        Ok(())
    }
    let c = &p.colors;
    w.create_element("preferences")
        .with_attribute(("version", PREFS_VERSION))
        .write_inner_content(|w| {
            w.create_element("colors").write_inner_content(|w| {
                for (name, color) in [
                    ("send", c.send),
                    ("receive", c.receive),
                    ("forward", c.forward),
                    ("drop", c.drop),
                    ("broadcast", c.broadcast),
                    ("nodeDefault", c.node_default),
                    ("nodeGrayed", c.node_grayed),
                    ("background", c.background),
                ] {
                    leaf(w, name, &color.to_string())?;
                }
                w.create_element("palette").write_inner_content(|w| {
                    for color in &c.palette {
                        leaf(w, "color", &color.to_string())?;
                    }
                    Ok(())
                })?;
                Ok(())
            })?;
            w.create_element("terrain").write_inner_content(|w| {
                leaf(w, "width", &p.terrain.width.to_string())?;
                leaf(w, "height", &p.terrain.height.to_string())
            })?;
            leaf(w, "radioRange", &p.radio_range.to_string())?;
            w.create_element("filters").write_inner_content(|w| {
                leaf(w, "showRouting", &p.filters.show_routing.to_string())?;
                leaf(w, "showAgent", &p.filters.show_agent.to_string())
            })?;
            w.create_element("directories").write_inner_content(|w| {
                leaf(w, "screenshotDir", &p.screenshot_dir.to_string_lossy())
            })?;
            w.create_element("playback").write_inner_content(|w| {
                leaf(w, "speed", &p.playback_speed.to_string())
            })?;
            Ok(())
        })?;
    Ok(())
}

pub fn save_prefs(p: &Preferences, path: &Path) -> Result<(), PrefsError> {
    p.validate()?;
    std::fs::write(path, to_xml_string(p)).map_err(|source| PrefsError::Io { path: path.to_path_buf(), source })
}

pub fn load_prefs(path: &Path) -> Result<LoadedPrefs, PrefsError> {
    let text = std::fs::read_to_string(path).map_err(|source| PrefsError::Io { path: path.to_path_buf(), source })?;
    from_xml_str(&text)
}

/// Minimal element tree; text is kept raw so path strings survive intact.
struct Element {
    name: String,
    version: Option<String>,
    text: String,
    children: Vec<Element>,
}

impl Element {
    fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text.as_bytes()[..offset.min(text.len())];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
    (line, col)
}

fn parse_tree(text: &str) -> Result<Element, PrefsError> {
    let mut reader = Reader::from_str(text);
    let xml_err = |reader: &Reader<&[u8]>, offset: Option<u64>, message: String| {
        let pos = offset.unwrap_or_else(|| reader.buffer_position()) as usize;
        let (line, column) = line_col(text, pos);
        PrefsError::Xml { line, column, message }
    };
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| xml_err(&reader, Some(reader.error_position()), e.to_string()))?;
        match event {
            Event::Start(_) | Event::Empty(_) if root.is_some() => {
                return Err(xml_err(&reader, None, "content after the root element".into()));
            }
            Event::Start(ref s) | Event::Empty(ref s) => {
                let name = String::from_utf8_lossy(s.name().as_ref()).into_owned();
                let mut version = None;
                if stack.is_empty() {
                    for attr in s.attributes() {
                        let attr = attr.map_err(|e| xml_err(&reader, None, e.to_string()))?;
                        if attr.key.as_ref() == b"version" {
                            let v = attr.unescape_value().map_err(|e| xml_err(&reader, None, e.to_string()))?;
                            version = Some(v.into_owned());
                        }
                    }
                }
                let el = Element { name, version, text: String::new(), children: Vec::new() };
                if matches!(event, Event::Start(_)) {
                    stack.push(el);
                } else {
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(el),
                        None => root = Some(el),
                    }
                }
            }
            Event::End(_) => {
                let el = stack.pop().expect("reader checks end tag names");
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| xml_err(&reader, None, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&s),
                    None if s.trim().is_empty() => {}
                    None => return Err(xml_err(&reader, None, "text outside the root element".into())),
                }
            }
            Event::CData(c) => {
                if let Some(el) = stack.last_mut() {
                    el.text.push_str(&String::from_utf8_lossy(&c));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(xml_err(&reader, Some(text.len() as u64), format!("unclosed element <{}>", open.name)));
    }
    root.ok_or_else(|| xml_err(&reader, None, "document has no root element".into()))
}

struct Interpreter {
    warnings: Vec<String>,
}

impl Interpreter {
    fn warn_unknown(&mut self, el: &Element, path: &str, known: &[&str]) {
        for c in &el.children {
            if !known.contains(&c.name.as_str()) {
                self.warnings.push(format!("ignoring unknown element {path}/{}", c.name));
            }
        }
    }

    fn value<T: FromStr>(&self, parent: &Element, name: &str, path: &str, default: T) -> Result<T, PrefsError>
    where
        T::Err: fmt::Display,
    {
        match parent.child(name) {
            None => Ok(default),
            Some(el) => el
                .text
                .trim()
                .parse()
                .map_err(|e: T::Err| PrefsError::field(&format!("{path}/{name}"), e.to_string())),
        }
    }
}

pub fn from_xml_str(text: &str) -> Result<LoadedPrefs, PrefsError> {
    let root = parse_tree(text)?;
    if root.name != "preferences" {
        return Err(PrefsError::field(&root.name, "root element must be <preferences>"));
    }
    match root.version.as_deref() {
        Some(PREFS_VERSION) => {}
        Some(v) => return Err(PrefsError::field("preferences@version", format!("unsupported version `{v}`"))),
        None => return Err(PrefsError::field("preferences@version", "missing version attribute")),
    }
    let mut it = Interpreter { warnings: Vec::new() };
    let mut p = Preferences::default();
    it.warn_unknown(&root, "preferences", &["colors", "terrain", "radioRange", "filters", "directories", "playback"]);

    if let Some(colors) = root.child("colors") {
        let path = "preferences/colors";
        it.warn_unknown(
            colors,
            path,
            &["send", "receive", "forward", "drop", "broadcast", "nodeDefault", "nodeGrayed", "background", "palette"],
        );
        let c = &mut p.colors;
        for (name, slot) in [
            ("send", &mut c.send),
            ("receive", &mut c.receive),
            ("forward", &mut c.forward),
            ("drop", &mut c.drop),
            ("broadcast", &mut c.broadcast),
            ("nodeDefault", &mut c.node_default),
            ("nodeGrayed", &mut c.node_grayed),
            ("background", &mut c.background),
        ] {
            *slot = it.value(colors, name, path, *slot)?;
        }
        if let Some(palette) = colors.child("palette") {
            let path = "preferences/colors/palette";
            it.warn_unknown(palette, path, &["color"]);
            c.palette = palette
                .children
                .iter()
                .filter(|e| e.name == "color")
                .map(|e| e.text.trim().parse().map_err(|m: String| PrefsError::field(&format!("{path}/color"), m)))
                .collect::<Result<_, _>>()?;
        }
    }
    if let Some(terrain) = root.child("terrain") {
        let path = "preferences/terrain";
        it.warn_unknown(terrain, path, &["width", "height"]);
        p.terrain.width = it.value(terrain, "width", path, p.terrain.width)?;
        p.terrain.height = it.value(terrain, "height", path, p.terrain.height)?;
    }
    p.radio_range = it.value(&root, "radioRange", "preferences", p.radio_range)?;
    if let Some(filters) = root.child("filters") {
        let path = "preferences/filters";
        it.warn_unknown(filters, path, &["showRouting", "showAgent"]);
        p.filters.show_routing = it.value(filters, "showRouting", path, p.filters.show_routing)?;
        p.filters.show_agent = it.value(filters, "showAgent", path, p.filters.show_agent)?;
    }
    if let Some(dirs) = root.child("directories") {
        it.warn_unknown(dirs, "preferences/directories", &["screenshotDir"]);
        if let Some(d) = dirs.child("screenshotDir") {
            p.screenshot_dir = PathBuf::from(&d.text);
        }
    }
    if let Some(playback) = root.child("playback") {
        let path = "preferences/playback";
        it.warn_unknown(playback, path, &["speed"]);
        p.playback_speed = it.value(playback, "speed", path, p.playback_speed)?;
    }
    p.validate()?;
    Ok(LoadedPrefs { prefs: p, warnings: it.warnings })
}
