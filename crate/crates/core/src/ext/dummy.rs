use crate::model::{Address, NodeId, ProtocolProps};
use crate::state::MobileNode;

use super::{ExtensionError, ProtocolExtension, VisualEventKind, Visualizer};

/// Generic handler for protocols without a dedicated extension. Keeps no
/// protocol state and lists the raw tail of the displayed event.
#[derive(Clone, Copy, Debug, Default)]
pub struct DummyExtension;

impl ProtocolExtension for DummyExtension {
    fn name(&self) -> &str {
        "dummy"
    }

    fn create_node(
        &self,
        node_id: NodeId,
        address: Option<Address>,
        x: f64,
        y: f64,
        _props: Option<&ProtocolProps>,
    ) -> Result<MobileNode, ExtensionError> {
        Ok(MobileNode::new(node_id, address, x, y))
    }

    fn update_node(&self, _node: &mut MobileNode, _props: Option<&ProtocolProps>, _event_index: u64) {}

    fn copy_node(&self, node: &MobileNode) -> MobileNode {
        node.clone()
    }

    fn notify_event(&self, vis: &mut Visualizer<'_>) {
        let Some(ev) = vis.current_event() else { return };
        let ve = *vis.visual_event();
        if ve.kind == VisualEventKind::NodeClicked && ve.node_id != Some(ev.node_id) {
            return;
        }
        if let Some(props) = &ev.proto {
            let panel = vis.panel_mut();
            panel.title = format!("Protocol ({})", props.name);
            for (k, v) in &props.entries {
                panel.push(k.clone(), v);
            }
        }
    }
}
