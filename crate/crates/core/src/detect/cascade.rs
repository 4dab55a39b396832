//! Haar cascade model and its XML loader.
//!
//! Reads the "new-format" boosted cascade files (`<cascade>` root with
//! `<stageType>BOOST</stageType>` and `<featureType>HAAR</featureType>`) such
//! as the stock frontal-face files. Only upright features and stump weak
//! classifiers are supported; anything else is rejected at load time.

use roxmltree::{Document, Node};

use super::DetectError;

/// One weighted rectangle of a Haar feature, in model-window units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

impl WeightedRect {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<WeightedRect>,
    pub tilted: bool,
}

impl HaarFeature {
    /// True when the weighted areas cancel, i.e. the feature responds with
    /// zero on a uniform patch. Stock cascades are built this way.
    pub fn is_balanced(&self) -> bool {
        let total: f64 = self.rects.iter().map(|r| r.weight * r.area() as f64).sum();
        total.abs() < 1e-9
    }
}

/// Decision stump: `left_value` when the normalized feature response is
/// below `threshold`, `right_value` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakClassifier {
    pub feature_index: usize,
    pub threshold: f64,
    pub left_value: f64,
    pub right_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub weak: Vec<WeakClassifier>,
}

/// A validated cascade. Construct with [`CascadeModel::new`] or [`parse_cascade`].
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    window_width: u32,
    window_height: u32,
    stages: Vec<Stage>,
    features: Vec<HaarFeature>,
}

impl CascadeModel {
    pub fn new(
        window_width: u32,
        window_height: u32,
        stages: Vec<Stage>,
        features: Vec<HaarFeature>,
    ) -> Result<Self, DetectError> {
        if window_width < 4 || window_height < 4 {
            return Err(DetectError::InvalidModel(format!(
                "window {window_width}x{window_height} is smaller than 4x4"
            )));
        }
        if stages.is_empty() {
            return Err(DetectError::InvalidModel("cascade has no stages".into()));
        }
        for (fi, f) in features.iter().enumerate() {
            if f.tilted {
                return Err(DetectError::UnsupportedFeature { index: fi });
            }
            if !(2..=3).contains(&f.rects.len()) {
                return Err(DetectError::InvalidModel(format!(
                    "feature {fi} has {} rects, expected 2 or 3",
                    f.rects.len()
                )));
            }
            for r in &f.rects {
                if r.w == 0 || r.h == 0 || r.x + r.w > window_width || r.y + r.h > window_height {
                    return Err(DetectError::InvalidModel(format!(
                        "feature {fi} rect {r:?} does not fit the {window_width}x{window_height} window"
                    )));
                }
            }
        }
        for (si, s) in stages.iter().enumerate() {
            if s.weak.is_empty() {
                return Err(DetectError::InvalidModel(format!(
                    "stage {si} has no weak classifiers"
                )));
            }
            for (wi, w) in s.weak.iter().enumerate() {
                if w.feature_index >= features.len() {
                    return Err(DetectError::DanglingFeature {
                        stage: si,
                        weak: wi,
                        index: w.feature_index,
                        count: features.len(),
                    });
                }
            }
        }
        Ok(Self {
            window_width,
            window_height,
            stages,
            features,
        })
    }

    pub fn window_width(&self) -> u32 {
        self.window_width
    }

    pub fn window_height(&self) -> u32 {
        self.window_height
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn features(&self) -> &[HaarFeature] {
        &self.features
    }

    pub fn weak_count(&self) -> usize {
        self.stages.iter().map(|s| s.weak.len()).sum()
    }

    /// The first `n` stages of this cascade (at least one is kept).
    pub fn truncated(&self, n: usize) -> CascadeModel {
        CascadeModel {
            stages: self.stages[..n.clamp(1, self.stages.len())].to_vec(),
            ..self.clone()
        }
    }
}

struct Loader<'a, 'input> {
    doc: &'a Document<'input>,
}

impl<'a, 'input> Loader<'a, 'input> {
    fn schema(&self, node: Node<'_, '_>, message: impl Into<String>) -> DetectError {
        let pos = self.doc.text_pos_at(node.range().start);
        DetectError::Schema {
            line: pos.row,
            column: pos.col,
            message: message.into(),
        }
    }

    fn child<'n>(&self, node: Node<'n, 'input>, name: &str) -> Result<Node<'n, 'input>, DetectError>
    where
        'a: 'n,
    {
        node.children()
            .find(|c| c.has_tag_name(name))
            .ok_or_else(|| self.schema(node, format!("<{}> lacks <{name}>", node.tag_name().name())))
    }

    fn items<'n>(&self, node: Node<'n, 'input>) -> impl Iterator<Item = Node<'n, 'input>> {
        node.children().filter(|c| c.has_tag_name("_"))
    }

    fn text<'n>(&self, node: Node<'n, 'input>) -> &'n str {
        node.text().unwrap_or("").trim()
    }

    fn numbers(&self, node: Node<'_, '_>) -> Result<Vec<f64>, DetectError> {
        self.text(node)
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| self.schema(node, format!("`{tok}` is not a number")))
            })
            .collect()
    }

    fn scalar(&self, parent: Node<'_, '_>, name: &str) -> Result<f64, DetectError> {
        let node = self.child(parent, name)?;
        match self.numbers(node)?.as_slice() {
            [v] => Ok(*v),
            other => Err(self.schema(
                node,
                format!("<{name}> holds {} values, expected 1", other.len()),
            )),
        }
    }

    fn count(&self, parent: Node<'_, '_>, name: &str) -> Result<u32, DetectError> {
        let v = self.scalar(parent, name)?;
        if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
            return Err(self.schema(
                self.child(parent, name)?,
                format!("<{name}> must be a non-negative integer"),
            ));
        }
        Ok(v as u32)
    }
}

/// Parses cascade XML text into a validated [`CascadeModel`].
pub fn parse_cascade(xml: &str) -> Result<CascadeModel, DetectError> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        DetectError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let ld = Loader { doc: &doc };
    let root = doc.root_element();
    let cascade = if root.has_tag_name("cascade") {
        root
    } else {
        ld.child(root, "cascade")?
    };

    let stage_type = ld.text(ld.child(cascade, "stageType")?);
    if stage_type != "BOOST" {
        return Err(ld.schema(cascade, format!("stageType `{stage_type}` is not BOOST")));
    }
    let feature_type = ld.text(ld.child(cascade, "featureType")?);
    if feature_type != "HAAR" {
        return Err(ld.schema(cascade, format!("featureType `{feature_type}` is not HAAR")));
    }
    let height = ld.count(cascade, "height")?;
    let width = ld.count(cascade, "width")?;

    let stages_node = ld.child(cascade, "stages")?;
    let mut stages = Vec::new();
    for (si, stage_node) in ld.items(stages_node).enumerate() {
        let threshold = ld.scalar(stage_node, "stageThreshold")?;
        let declared = ld.count(stage_node, "maxWeakCount")?;
        let weak_node = ld.child(stage_node, "weakClassifiers")?;
        let mut weak = Vec::new();
        for (wi, wc) in ld.items(weak_node).enumerate() {
            let nodes_el = ld.child(wc, "internalNodes")?;
            let nodes = ld.numbers(nodes_el)?;
            if nodes.len() % 4 != 0 || nodes.is_empty() {
                return Err(ld.schema(
                    nodes_el,
                    format!("internalNodes holds {} values, not a multiple of 4", nodes.len()),
                ));
            }
            if nodes.len() != 4 {
                return Err(DetectError::UnsupportedStructure {
                    stage: si,
                    weak: wi,
                    nodes: nodes.len() / 4,
                });
            }
            let leaves_el = ld.child(wc, "leafValues")?;
            let leaves = ld.numbers(leaves_el)?;
            if leaves.len() != 2 {
                return Err(DetectError::UnsupportedStructure {
                    stage: si,
                    weak: wi,
                    nodes: leaves.len().saturating_sub(1),
                });
            }
            let fidx = nodes[2];
            if fidx < 0.0 || fidx.fract() != 0.0 {
                return Err(ld.schema(nodes_el, format!("feature index {fidx} is not valid")));
            }
            weak.push(WeakClassifier {
                feature_index: fidx as usize,
                threshold: nodes[3],
                left_value: leaves[0],
                right_value: leaves[1],
            });
        }
        if weak.len() != declared as usize {
            return Err(ld.schema(
                stage_node,
                format!(
                    "stage {si} declares {declared} weak classifiers but holds {}",
                    weak.len()
                ),
            ));
        }
        stages.push(Stage { threshold, weak });
    }

    let features_node = ld.child(cascade, "features")?;
    let mut features = Vec::new();
    for (fi, fnode) in ld.items(features_node).enumerate() {
        let tilted = match fnode.children().find(|c| c.has_tag_name("tilted")) {
            Some(t) => ld.text(t) != "0",
            None => false,
        };
        if tilted {
            return Err(DetectError::UnsupportedFeature { index: fi });
        }
        let rects_node = ld.child(fnode, "rects")?;
        let mut rects = Vec::new();
        for r in ld.items(rects_node) {
            let v = ld.numbers(r)?;
            let [x, y, w, h, weight] = v[..] else {
                return Err(ld.schema(r, format!("rect holds {} values, expected 5", v.len())));
            };
            if [x, y, w, h].iter().any(|c| *c < 0.0 || c.fract() != 0.0) {
                return Err(ld.schema(r, "rect coordinates must be non-negative integers"));
            }
            rects.push(WeightedRect {
                x: x as u32,
                y: y as u32,
                w: w as u32,
                h: h as u32,
                weight,
            });
        }
        features.push(HaarFeature { rects, tilted });
    }

    CascadeModel::new(width, height, stages, features)
}

/// Reads and parses a cascade file.
pub fn load_cascade(path: impl AsRef<std::path::Path>) -> Result<CascadeModel, DetectError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DetectError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_cascade(&text)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn parses_hand_built_single_stump() {
        let xml = tiny_cascade("0 -1 0 -2.5e-01", "-1. 1.", TWO_RECTS, "");
        let m = parse_cascade(&xml).unwrap();
        assert_eq!(m.stages().len(), 1);
        assert_eq!(m.weak_count(), 1);
        assert_eq!(m.features().len(), 1);
        assert_eq!((m.window_width(), m.window_height()), (24, 24));
        let w = m.stages()[0].weak[0];
        assert_eq!(w.threshold, -0.25);
        assert_eq!((w.left_value, w.right_value), (-1.0, 1.0));
        assert_eq!(m.stages()[0].threshold, -1.5);
        assert_eq!(m.features()[0].rects[1].weight, 2.0);
        assert!(m.features()[0].is_balanced());
    }

    #[test]
    fn tilted_feature_is_rejected_with_index() {
        let xml = tiny_cascade("0 -1 0 0.1", "-1. 1.", TWO_RECTS, "<tilted>1</tilted>");
        assert!(matches!(
            parse_cascade(&xml),
            Err(DetectError::UnsupportedFeature { index: 0 })
        ));
        let upright = tiny_cascade("0 -1 0 0.1", "-1. 1.", TWO_RECTS, "<tilted>0</tilted>");
        assert!(parse_cascade(&upright).is_ok());
    }

    #[test]
    fn tree_classifier_is_rejected() {
        let xml = tiny_cascade("0 1 0 0.1 -1 -2 0 0.2", "1. 2. 3.", TWO_RECTS, "");
        assert!(matches!(
            parse_cascade(&xml),
            Err(DetectError::UnsupportedStructure { stage: 0, weak: 0, nodes: 2 })
        ));
    }

    #[test]
    fn dangling_feature_index_is_a_validation_error() {
        let xml = tiny_cascade("0 -1 3 0.1", "-1. 1.", TWO_RECTS, "");
        assert!(matches!(
            parse_cascade(&xml),
            Err(DetectError::DanglingFeature { index: 3, count: 1, .. })
        ));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let xml = "<cascade>\n  <stageType>BOOST</stageType>\n  <oops>\n</cascade>";
        match parse_cascade(xml) {
            Err(DetectError::Xml { line, .. }) => assert!(line >= 3, "line {line}"),
            other => panic!("expected xml error, got {other:?}"),
        }
    }

    #[test]
    fn rect_outside_window_is_invalid() {
        let xml = tiny_cascade("0 -1 0 0.1", "-1. 1.", "<_>20 0 8 24 -1.</_><_>0 0 12 24 2.</_>", "");
        assert!(matches!(parse_cascade(&xml), Err(DetectError::InvalidModel(_))));
    }

    #[test]
    fn missing_element_is_a_schema_error() {
        let xml = tiny_cascade("0 -1 0 0.1", "-1. 1.", TWO_RECTS, "").replace("<width>24</width>", "");
        assert!(matches!(parse_cascade(&xml), Err(DetectError::Schema { .. })));
    }
}
