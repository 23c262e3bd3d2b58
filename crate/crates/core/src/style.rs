//! Color and shape code for transmissions.
//!
//! Agent traffic is drawn with fat arrows, routing traffic with slim ones.
//! Sends and forwards are dashed, receives solid. Drops highlight the node
//! instead of drawing an arrow, and a broadcast next hop becomes a ring.
//! The same table is exported to clients so every renderer agrees.

use serde::Serialize;

use crate::model::{Action, Layer, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Thickness {
    Fat,
    Slim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dash {
    Dashed,
    Solid,
}

/// Names a color slot in the preferences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorKey {
    Send,
    Receive,
    Forward,
    Drop,
    Broadcast,
}

impl From<Action> for ColorKey {
    fn from(a: Action) -> Self {
        match a {
            Action::Send => ColorKey::Send,
            Action::Receive => ColorKey::Receive,
            Action::Forward => ColorKey::Forward,
            Action::Drop => ColorKey::Drop,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ArrowStyle {
    pub thickness: Thickness,
    pub dash: Dash,
    pub color: ColorKey,
}

/// Arrow style for a layer/action pair. `None` for drops and for layers
/// other than agent and routing.
pub fn arrow_style(layer: &Layer, action: Action) -> Option<ArrowStyle> {
    let thickness = match layer {
        Layer::Agt => Thickness::Fat,
        Layer::Rtr => Thickness::Slim,
        _ => return None,
    };
    let dash = match action {
        Action::Send | Action::Forward => Dash::Dashed,
        Action::Receive => Dash::Solid,
        Action::Drop => return None,
    };
    Some(ArrowStyle {
        thickness,
        dash,
        color: action.into(),
    })
}

/// What to draw for an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlyphKind {
    None,
    Arrow { style: ArrowStyle },
    BroadcastRing { style: ArrowStyle },
    DropHighlight,
}

pub fn event_glyph_kind(ev: &TraceEvent) -> GlyphKind {
    let Some(layer @ (Layer::Agt | Layer::Rtr)) = &ev.layer else {
        return GlyphKind::None;
    };
    if ev.action == Action::Drop {
        return GlyphKind::DropHighlight;
    }
    let Some(style) = arrow_style(layer, ev.action) else {
        return GlyphKind::None;
    };
    if ev.hop_dst.is_some_and(|h| h < 0) {
        GlyphKind::BroadcastRing {
            style: ArrowStyle {
                color: ColorKey::Broadcast,
                ..style
            },
        }
    } else {
        GlyphKind::Arrow { style }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StyleRow {
    pub layer: &'static str,
    pub action: Action,
    pub style: Option<ArrowStyle>,
}

/// Every layer/action combination that can produce a glyph.
pub fn style_table() -> Vec<StyleRow> {
    [("AGT", Layer::Agt), ("RTR", Layer::Rtr)]
        .into_iter()
        .flat_map(|(name, layer)| {
            Action::ALL.into_iter().map(move |action| StyleRow {
                layer: name,
                action,
                style: arrow_style(&layer, action),
            })
        })
        .collect()
}
