//! Headless frame renderer.
//!
//! Everything is drawn with integer pixel coverage and integer blending, so
//! equal inputs always produce byte-identical rasters.

use std::io;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgba, RgbaImage};

use crate::model::{Layer, TraceEvent};
use crate::partition::PartitionSet;
use crate::prefs::{Preferences, Rgb, Terrain};
use crate::state::NetworkState;
use crate::style::{event_glyph_kind, ArrowStyle, ColorKey, Dash, GlyphKind, Thickness};

pub const NODE_RADIUS_PX: i64 = 4;
const DROP_RING_RADIUS_PX: i64 = 7;
const BROADCAST_RING_RADIUS_PX: i64 = 14;
const PARTITION_ALPHA: u32 = 96;
const FIT_MARGIN_PX: f64 = 12.0;

/// Maps terrain meters to pixels. `origin` is the world point shown at the
/// bottom-left corner; y grows upward in the world and downward on screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewport {
    pub origin_x: f64,
    pub origin_y: f64,
    pub scale: f64,
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    /// Centers the terrain in a `width` x `height` canvas with a small margin.
    pub fn fit(terrain: Terrain, width: u32, height: u32) -> Self {
        let avail_w = (width as f64 - 2.0 * FIT_MARGIN_PX).max(1.0);
        let avail_h = (height as f64 - 2.0 * FIT_MARGIN_PX).max(1.0);
        let sx = if terrain.width > 0.0 { avail_w / terrain.width } else { f64::INFINITY };
        let sy = if terrain.height > 0.0 { avail_h / terrain.height } else { f64::INFINITY };
        let mut scale = sx.min(sy);
        if !scale.is_finite() {
            scale = 1.0;
        }
        Self {
            origin_x: terrain.width / 2.0 - width as f64 / 2.0 / scale,
            origin_y: terrain.height / 2.0 - height as f64 / 2.0 / scale,
            scale,
            width,
            height,
        }
    }

    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) * self.scale,
            self.height as f64 - (y - self.origin_y) * self.scale,
        )
    }

    pub fn to_world(&self, px: f64, py: f64) -> (f64, f64) {
        (
            px / self.scale + self.origin_x,
            (self.height as f64 - py) / self.scale + self.origin_y,
        )
    }

    /// The pixel that contains world point `(x, y)`.
    pub fn pixel_of(&self, x: f64, y: f64) -> (i64, i64) {
        let (px, py) = self.to_pixel(x, y);
        (px.floor() as i64, py.floor() as i64)
    }
}

pub struct FrameSpec<'a> {
    pub state: &'a NetworkState,
    pub event: Option<&'a TraceEvent>,
    pub partitions: Option<&'a PartitionSet>,
    pub prefs: &'a Preferences,
    pub viewport: Viewport,
}

fn rgba(c: Rgb) -> Rgba<u8> {
    Rgba([c.r, c.g, c.b, 255])
}

struct Canvas {
    img: RgbaImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Rgba<u8>) {
        if x >= 0 && y >= 0 && x < self.img.width() as i64 && y < self.img.height() as i64 {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn disc(&mut self, cx: i64, cy: i64, r: i64, c: Rgba<u8>) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r + r {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    /// Circle outline; `dashed` skips alternate arcs of 8 steps.
    fn ring(&mut self, cx: i64, cy: i64, r: i64, width: i64, dashed: bool, c: Rgba<u8>) {
        let outer = r * r + r;
        let inner = (r - width) * (r - width) + (r - width);
        for dy in -r..=r {
            for dx in -r..=r {
                let d = dx * dx + dy * dy;
                if d <= outer && d > inner {
                    if dashed {
                        let angle = (dy as f64).atan2(dx as f64);
                        let sector = ((angle + std::f64::consts::PI) / (std::f64::consts::PI / 8.0)) as i64;
                        if sector % 2 == 1 {
                            continue;
                        }
                    }
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    /// Bresenham line; fat lines stamp a 3x3 block per step.
    fn line(&mut self, from: (i64, i64), to: (i64, i64), fat: bool, dashed: bool, c: Rgba<u8>) {
        let (mut x, mut y) = from;
        let dx = (to.0 - x).abs();
        let dy = -(to.1 - y).abs();
        let sx = if x < to.0 { 1 } else { -1 };
        let sy = if y < to.1 { 1 } else { -1 };
        let mut err = dx + dy;
        let mut step = 0u64;
        loop {
            if !dashed || step % 10 < 6 {
                if fat {
                    for oy in -1..=1 {
                        for ox in -1..=1 {
                            self.put(x + ox, y + oy, c);
                        }
                    }
                } else {
                    self.put(x, y, c);
                }
            }
            if (x, y) == to {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
            step += 1;
        }
    }

    fn digit(&mut self, x: i64, y: i64, d: u8, c: Rgba<u8>) {
        for (row, bits) in DIGITS[d as usize].iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    self.put(x + col, y + row as i64, c);
                }
            }
        }
    }

    fn label(&mut self, x: i64, y: i64, n: u32, c: Rgba<u8>) {
        for (i, ch) in n.to_string().bytes().enumerate() {
            self.digit(x + 4 * i as i64, y, ch - b'0', c);
        }
    }
}

/// 3x5 digit glyphs, one row per entry, high bit leftmost.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn style_color(prefs: &Preferences, key: ColorKey) -> Rgb {
    let c = &prefs.colors;
    match key {
        ColorKey::Send => c.send,
        ColorKey::Receive => c.receive,
        ColorKey::Forward => c.forward,
        ColorKey::Drop => c.drop,
        ColorKey::Broadcast => c.broadcast,
    }
}

/// Whether the layer filters let this event's glyph through.
pub fn layer_visible(prefs: &Preferences, ev: &TraceEvent) -> bool {
    match ev.layer {
        Some(Layer::Agt) => prefs.filters.show_agent,
        Some(Layer::Rtr) => prefs.filters.show_routing,
        _ => true,
    }
}

fn blend(dst: Rgba<u8>, src: Rgb, alpha: u32) -> Rgba<u8> {
    let mix = |s: u8, d: u8| ((s as u32 * alpha + d as u32 * (255 - alpha) + 127) / 255) as u8;
    Rgba([mix(src.r, dst[0]), mix(src.g, dst[1]), mix(src.b, dst[2]), 255])
}

fn draw_partitions(canvas: &mut Canvas, spec: &FrameSpec, p: &PartitionSet) {
    let vp = spec.viewport;
    let (w, h) = (vp.width as i64, vp.height as i64);
    let r_px = p.radio_range * vp.scale;
    let r2 = r_px * r_px;
    let mut mask = vec![false; (w * h) as usize];
    for (members, &key) in p.components.iter().zip(&p.color_keys) {
        mask.iter_mut().for_each(|m| *m = false);
        for &id in members {
            let Some(n) = spec.state.node(id) else { continue };
            let (cx, cy) = vp.to_pixel(n.pos().x, n.pos().y);
            let x0 = ((cx - r_px).floor() as i64).max(0);
            let x1 = ((cx + r_px).ceil() as i64).min(w - 1);
            let y0 = ((cy - r_px).floor() as i64).max(0);
            let y1 = ((cy + r_px).ceil() as i64).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (ddx, ddy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if ddx * ddx + ddy * ddy <= r2 {
                        mask[(y * w + x) as usize] = true;
                    }
                }
            }
        }
        let color = spec.prefs.palette_color(key);
        for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            let (x, y) = ((i as i64 % w) as u32, (i as i64 / w) as u32);
            let px = canvas.img.get_pixel(x, y);
            canvas.img.put_pixel(x, y, blend(*px, color, PARTITION_ALPHA));
        }
    }
}

fn node_pixel(spec: &FrameSpec, id: i64) -> Option<(i64, i64)> {
    let n = spec.state.node(u32::try_from(id).ok()?)?;
    Some(spec.viewport.pixel_of(n.pos().x, n.pos().y))
}

fn draw_arrow(canvas: &mut Canvas, from: (i64, i64), to: (i64, i64), style: ArrowStyle, c: Rgba<u8>) {
    let fat = style.thickness == Thickness::Fat;
    canvas.line(from, to, fat, style.dash == Dash::Dashed, c);
    let (dx, dy) = ((to.0 - from.0) as f64, (to.1 - from.1) as f64);
    let len = dx.hypot(dy);
    if len < 1.0 {
        return;
    }
    let (ux, uy) = (dx / len, dy / len);
    // stop the head at the node rim so it stays visible
    let tip = (to.0 as f64 - ux * (NODE_RADIUS_PX + 1) as f64, to.1 as f64 - uy * (NODE_RADIUS_PX + 1) as f64);
    for side in [-1.0, 1.0] {
        let bx = tip.0 - ux * 7.0 + side * uy * 4.0;
        let by = tip.1 - uy * 7.0 - side * ux * 4.0;
        canvas.line(
            (tip.0.round() as i64, tip.1.round() as i64),
            (bx.round() as i64, by.round() as i64),
            fat,
            false,
            c,
        );
    }
}

fn draw_glyph(canvas: &mut Canvas, spec: &FrameSpec, ev: &TraceEvent) {
    if !layer_visible(spec.prefs, ev) {
        return;
    }
    let src_id = ev.hop_src.unwrap_or(ev.node_id as i64);
    match event_glyph_kind(ev) {
        GlyphKind::Arrow { style } => {
            let (Some(from), Some(to)) = (node_pixel(spec, src_id), ev.hop_dst.and_then(|d| node_pixel(spec, d)))
            else {
                return;
            };
            draw_arrow(canvas, from, to, style, rgba(style_color(spec.prefs, style.color)));
        }
        GlyphKind::BroadcastRing { style } => {
            let Some((cx, cy)) = node_pixel(spec, src_id) else { return };
            let width = if style.thickness == Thickness::Fat { 3 } else { 1 };
            let c = rgba(style_color(spec.prefs, style.color));
            canvas.ring(cx, cy, BROADCAST_RING_RADIUS_PX, width, style.dash == Dash::Dashed, c);
        }
        GlyphKind::DropHighlight | GlyphKind::None => {}
    }
}

pub fn render_frame(spec: &FrameSpec) -> RgbaImage {
    let vp = spec.viewport;
    let colors = &spec.prefs.colors;
    let mut canvas = Canvas {
        img: RgbaImage::from_pixel(vp.width, vp.height, rgba(colors.background)),
    };
    if let Some(p) = spec.partitions {
        draw_partitions(&mut canvas, spec, p);
    }
    if let Some(ev) = spec.event {
        draw_glyph(&mut canvas, spec, ev);
    }
    for n in spec.state.nodes() {
        let (cx, cy) = vp.pixel_of(n.pos().x, n.pos().y);
        let c = rgba(if n.settled() { colors.node_default } else { colors.node_grayed });
        canvas.disc(cx, cy, NODE_RADIUS_PX, c);
        canvas.label(cx + NODE_RADIUS_PX + 2, cy - NODE_RADIUS_PX - 5, n.node_id(), c);
    }
    if let Some(ev) = spec.event {
        if event_glyph_kind(ev) == GlyphKind::DropHighlight && layer_visible(spec.prefs, ev) {
            if let Some((cx, cy)) = node_pixel(spec, ev.node_id as i64) {
                canvas.ring(cx, cy, DROP_RING_RADIUS_PX, 2, false, rgba(colors.drop));
            }
        }
    }
    canvas.img
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("PNG encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgba8)?;
    Ok(out)
}

pub fn export_png(img: &RgbaImage, path: &Path) -> Result<(), RenderError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| RenderError::Io { path: path.to_path_buf(), source })
}

pub fn screenshot_file_name(event: i64) -> String {
    format!("frame_{event}.png")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::DummyExtension;
    use crate::index::{FirstSeen, PreScan};
    use crate::parser::parse_line;
    use crate::partition::{compute_partitions, RadioRange};

    fn state(lines: &[&str], extra_unsettled: &[u32]) -> NetworkState {
        let events: Vec<_> = lines
            .iter()
            .enumerate()
            .map(|(k, l)| parse_line(l, k as u64, k as u64).event().unwrap())
            .collect();
        let mut pre = PreScan::default();
        for e in &events {
            pre.nodes.entry(e.node_id).or_insert(FirstSeen { first_event_index: 0, x: 0.0, y: 0.0 });
        }
        for &id in extra_unsettled {
            pre.nodes.insert(id, FirstSeen { first_event_index: 9, x: 100.0, y: 100.0 });
        }
        let (mut s, _) = NetworkState::initial(&pre, &DummyExtension);
        for e in &events {
            s.apply(e, &DummyExtension).unwrap();
        }
        s
    }

    fn frame(state: &NetworkState, ev: Option<&TraceEvent>, p: Option<&PartitionSet>, prefs: &Preferences) -> RgbaImage {
        render_frame(&FrameSpec {
            state,
            event: ev,
            partitions: p,
            prefs,
            viewport: Viewport::fit(prefs.terrain, 400, 400),
        })
    }

    #[test]
    fn viewport_inverts() {
        let vp = Viewport::fit(Terrain { width: 1000.0, height: 500.0 }, 640, 480);
        let (px, py) = vp.to_pixel(250.0, 125.0);
        let (x, y) = vp.to_world(px, py);
        assert!((x - 250.0).abs() < 1e-9 && (y - 125.0).abs() < 1e-9);
        let (_, top) = vp.to_pixel(0.0, 500.0);
        let (_, bottom) = vp.to_pixel(0.0, 0.0);
        assert!(top < bottom);
    }

    #[test]
    fn empty_state_is_background_only() {
        let prefs = Preferences::default();
        let s = state(&[], &[]);
        let img = frame(&s, None, None, &prefs);
        let bg = rgba(prefs.colors.background);
        assert!(img.pixels().all(|p| *p == bg));
    }

    #[test]
    fn node_color_at_node_position() {
        let prefs = Preferences::default();
        let s = state(&["s -t 0 -Ni 0 -Nx 500 -Ny 500"], &[7]);
        let img = frame(&s, None, None, &prefs);
        let vp = Viewport::fit(prefs.terrain, 400, 400);
        let (x, y) = vp.pixel_of(500.0, 500.0);
        assert_eq!(*img.get_pixel(x as u32, y as u32), rgba(prefs.colors.node_default));
        let (x, y) = vp.pixel_of(100.0, 100.0);
        assert_eq!(*img.get_pixel(x as u32, y as u32), rgba(prefs.colors.node_grayed));
    }

    #[test]
    fn partitions_tint_distinct_colors() {
        let prefs = Preferences::default();
        let s = state(&["s -t 0 -Ni 1 -Nx 100 -Ny 100", "s -t 0 -Ni 2 -Nx 900 -Ny 900"], &[]);
        let p = compute_partitions(&s, RadioRange::new(50.0).unwrap());
        let img = frame(&s, None, Some(&p), &prefs);
        let vp = Viewport::fit(prefs.terrain, 400, 400);
        let bg = rgba(prefs.colors.background);
        let probe = |x: f64, y: f64| {
            let (px, py) = vp.pixel_of(x, y);
            *img.get_pixel(px as u32, py as u32)
        };
        let a = probe(100.0, 130.0);
        let b = probe(900.0, 870.0);
        assert_eq!(a, blend(bg, prefs.palette_color(1), PARTITION_ALPHA));
        assert_eq!(b, blend(bg, prefs.palette_color(2), PARTITION_ALPHA));
        assert_ne!(a, b);
    }

    #[test]
    fn filters_hide_arrows() {
        let lines = [
            "s -t 0 -Ni 0 -Nx 200 -Ny 500",
            "s -t 0 -Ni 1 -Nx 800 -Ny 500",
            "s -t 1 -Hs 0 -Hd 1 -Ni 0 -Nx 200 -Ny 500 -Nl RTR",
        ];
        let s = state(&lines, &[]);
        let ev = parse_line(lines[2], 2, 2).event().unwrap();
        let mut prefs = Preferences::default();
        let send = rgba(prefs.colors.send);
        let shown = frame(&s, Some(&ev), None, &prefs);
        assert!(shown.pixels().any(|p| *p == send));
        prefs.filters.show_routing = false;
        let hidden = frame(&s, Some(&ev), None, &prefs);
        assert!(!hidden.pixels().any(|p| *p == send));
        prefs.filters.show_routing = true;
        prefs.filters.show_agent = false;
        assert_eq!(frame(&s, Some(&ev), None, &prefs), shown);
    }

    #[test]
    fn drop_and_broadcast_glyphs() {
        let lines = ["s -t 0 -Ni 0 -Nx 500 -Ny 500"];
        let s = state(&lines, &[]);
        let prefs = Preferences::default();
        let drop = parse_line("d -t 1 -Ni 0 -Nl RTR -Nw CBK", 1, 1).event().unwrap();
        assert!(frame(&s, Some(&drop), None, &prefs).pixels().any(|p| *p == rgba(prefs.colors.drop)));
        let bc = parse_line("s -t 1 -Hs 0 -Hd -1 -Ni 0 -Nl RTR", 1, 1).event().unwrap();
        assert!(frame(&s, Some(&bc), None, &prefs).pixels().any(|p| *p == rgba(prefs.colors.broadcast)));
    }

    #[test]
    fn png_round_trip() {
        let prefs = Preferences::default();
        let s = state(&["s -t 0 -Ni 3 -Nx 10 -Ny 20"], &[]);
        let img = frame(&s, None, None, &prefs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(screenshot_file_name(0));
        export_png(&img, &path).unwrap();
        let back = image::open(&path).unwrap().to_rgba8();
        assert_eq!(back, img);
        assert!(path.ends_with("frame_0.png"));
    }
}
