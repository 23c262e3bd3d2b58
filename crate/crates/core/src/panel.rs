//! Label/value tables shown in the side panels.

use serde::Serialize;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PanelRow {
    pub label: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Panel {
    pub title: String,
    pub rows: Vec<PanelRow>,
}

impl Panel {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, value: impl ToString) {
        self.rows.push(PanelRow {
            label: label.into(),
            value: value.to_string(),
        });
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .map(|r| r.value.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
