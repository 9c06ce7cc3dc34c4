//! Synthetic 360x640 corpus of eight template families, one per topic.
//! Every layout is exact by construction (no jitter), so its constraint set
//! is known; template parameters vary continuously so near-duplicates are rare.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{BBox, Element, Gui};

pub const CANVAS_W: i64 = 360;
pub const CANVAS_H: i64 = 640;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Gallery,
    List,
    Form,
    Settings,
    Login,
    News,
    Profile,
    Map,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::Gallery,
        Template::List,
        Template::Form,
        Template::Settings,
        Template::Login,
        Template::News,
        Template::Profile,
        Template::Map,
    ];

    /// Topic label carried by generated GUIs.
    pub fn topic(self) -> &'static str {
        match self {
            Template::Gallery => "gallery",
            Template::List => "list",
            Template::Form => "form",
            Template::Settings => "settings",
            Template::Login => "login",
            Template::News => "news",
            Template::Profile => "profile",
            Template::Map => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Families to draw from, cycled in order.
    pub templates: Vec<Template>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            templates: Template::ALL.to_vec(),
        }
    }
}

struct Builder<'r> {
    gui: Gui,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn push(&mut self, kind: &str, x: i64, y: i64, w: i64, h: i64, text: Option<&str>) {
        let id = format!("e{:02}", self.gui.elements.len());
        let mut e = Element::placed(id, kind, BBox { x, y, w, h });
        e.text = text.map(str::to_string);
        debug_assert!(x >= 0 && y >= 0 && x + w <= CANVAS_W && y + h <= CANVAS_H, "{kind} out of canvas");
        self.gui.elements.push(e);
    }

    fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        *xs.choose(self.rng).expect("non-empty choice")
    }

    fn range(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi)
    }

    /// Full-width bar of random height; returns its bottom edge.
    fn toolbar(&mut self, titles: &[&str]) -> i64 {
        let t = self.pick(titles);
        let h = self.range(48, 64);
        self.push("Toolbar", 0, 0, CANVAS_W, h, Some(t));
        h
    }
}

const LIST_WORDS: [&str; 8] = ["Inbox", "Starred", "Sent", "Drafts", "Archive", "Spam", "Trash", "Updates"];
const SETTING_WORDS: [&str; 8] = [
    "Wi-Fi",
    "Bluetooth",
    "Airplane mode",
    "Notifications",
    "Dark mode",
    "Location",
    "Sounds",
    "Battery saver",
];
const FORM_WORDS: [&str; 6] = ["Name", "Email", "Phone", "Address", "City", "Password"];
const NEWS_WORDS: [&str; 6] = [
    "Markets rally on rate news",
    "Storm expected this weekend",
    "Local team wins final",
    "New park opens downtown",
    "Election results announced",
    "Tech stocks slide again",
];

fn gallery(b: &mut Builder) {
    let top = b.toolbar(&["Photos", "Gallery", "Album"]);
    let cols = b.range(2, 3);
    let m = b.range(4, 20);
    let gap = b.range(2, 14);
    let s = (CANVAS_W - 2 * m - (cols - 1) * gap) / cols;
    let max_rows = (CANVAS_H - top - m) / (s + gap);
    let rows = b.range(2, max_rows.clamp(2, 4));
    for i in 0..rows {
        for j in 0..cols {
            b.push("Image", m + j * (s + gap), top + m + i * (s + gap), s, s, None);
        }
    }
}

fn list(b: &mut Builder) {
    let top = b.toolbar(&["Inbox", "Messages", "Contacts"]);
    let m = b.range(0, 20);
    let h = b.range(48, 72);
    let gap = b.range(0, 10);
    let y0 = top + b.range(0, 16);
    let n = b.range(4, 7).min((CANVAS_H - y0 + gap) / (h + gap));
    for i in 0..n {
        let t = b.pick(&LIST_WORDS);
        b.push("ListItem", m, y0 + i * (h + gap), CANVAS_W - 2 * m, h, Some(t));
    }
}

fn form(b: &mut Builder) {
    let top = b.toolbar(&["Sign up", "Checkout", "Edit profile"]);
    let n = b.range(2, 4);
    let m = b.range(12, 32);
    let lw = b.range(80, 160);
    let fh = b.range(36, 48);
    let step = fh + b.range(32, 48);
    let mut y = top + b.range(12, 32);
    for _ in 0..n {
        let t = b.pick(&FORM_WORDS);
        b.push("Text", m, y, lw, 20, Some(t));
        b.push("TextField", m, y + 24, CANVAS_W - 2 * m, fh, None);
        y += step;
    }
    let bh = b.range(40, 52);
    b.push("Button", m, y + 8, CANVAS_W - 2 * m, bh, Some("Submit"));
}

fn settings(b: &mut Builder) {
    let top = b.toolbar(&["Settings", "Preferences"]);
    let n = b.range(3, 6);
    let rh = b.range(44, 64);
    let m = b.range(8, 24);
    let tw = b.range(160, 220);
    let y0 = top + b.range(0, 16);
    for i in 0..n {
        let y = y0 + i * rh;
        let t = b.pick(&SETTING_WORDS);
        b.push("Icon", m, y + (rh - 24) / 2, 24, 24, None);
        b.push("Text", m + 40, y + (rh - 20) / 2, tw, 20, Some(t));
        b.push("Switch", CANVAS_W - m - 48, y + (rh - 28) / 2, 48, 28, None);
    }
}

fn login(b: &mut Builder) {
    let y0 = b.range(60, 140);
    let fw = b.range(260, 328);
    let fx = (CANVAS_W - fw) / 2;
    let a = b.range(72, 120);
    b.push("Image", (CANVAS_W - a) / 2, y0, a, a, None);
    let fh = b.range(40, 52);
    let gap = b.range(12, 24);
    let y = y0 + a + b.range(24, 56);
    b.push("TextField", fx, y, fw, fh, Some("Username"));
    b.push("TextField", fx, y + fh + gap, fw, fh, Some("Password"));
    let by = y + 2 * (fh + gap) + b.range(8, 24);
    b.push("Button", fx, by, fw, 48, Some("Log in"));
    let tw = b.range(120, 200);
    b.push("Text", (CANVAS_W - tw) / 2, by + 64, tw, 20, Some("Forgot password?"));
}

fn news(b: &mut Builder) {
    let top = b.toolbar(&["News", "Headlines", "Top stories"]);
    let n = b.range(3, 5);
    let gap = b.range(6, 18);
    let m = b.range(8, 24);
    let (iw, ih) = (b.range(80, 112), b.range(60, 84));
    let y0 = top + b.range(4, 16);
    for i in 0..n {
        let y = y0 + i * (ih + gap);
        let t = b.pick(&NEWS_WORDS);
        b.push("Image", m, y, iw, ih, None);
        let tx = m + iw + 12;
        b.push("Text", tx, y + 8, CANVAS_W - m - tx, 40, Some(t));
    }
}

fn profile(b: &mut Builder) {
    let top = b.toolbar(&["Profile", "Account"]);
    let a = b.range(88, 128);
    let y0 = top + b.range(12, 24);
    b.push("Image", (CANVAS_W - a) / 2, y0, a, a, None);
    let y = y0 + a + 12;
    let nw = b.range(160, 240);
    b.push("Text", (CANVAS_W - nw) / 2, y, nw, 28, Some("Alex Morgan"));
    b.push("Text", 40, y + 36, 280, 40, Some("Designer and traveller"));
    let k = b.range(2, 3);
    let m = b.range(8, 24);
    let bw = (CANVAS_W - 2 * m - (k - 1) * 8) / k;
    for j in 0..k {
        let label = ["Follow", "Message", "Share"][j as usize];
        b.push("Button", m + j * (bw + 8), y + 88, bw, 40, Some(label));
    }
    let rows = b.range(0, 3);
    let rh = b.range(48, 60);
    for i in 0..rows {
        let t = ["Posts", "Followers", "Following"][i as usize];
        b.push("ListItem", 0, y + 144 + i * rh, CANVAS_W, rh, Some(t));
    }
}

fn map(b: &mut Builder) {
    let top = b.toolbar(&["Map", "Nearby", "Directions"]);
    b.push("Map", 0, top, CANVAS_W, CANVAS_H - top, None);
    let sh = b.range(36, 48);
    let m = b.range(8, 24);
    b.push("TextField", m, top + m, CANVAS_W - 2 * m, sh, Some("Search here"));
    let n = b.range(2, 3);
    let s = b.range(44, 60);
    for j in 0..n {
        b.push("Button", CANVAS_W - m - s, CANVAS_H - m - s - j * (s + 8), s, s, None);
    }
}

/// Generates one GUI of `template`.
pub fn generate(template: Template, rng: &mut ChaCha8Rng) -> Gui {
    let mut gui = Gui::new(CANVAS_W, CANVAS_H);
    gui.topic = Some(template.topic().to_string());
    let mut b = Builder { gui, rng };
    match template {
        Template::Gallery => gallery(&mut b),
        Template::List => list(&mut b),
        Template::Form => form(&mut b),
        Template::Settings => settings(&mut b),
        Template::Login => login(&mut b),
        Template::News => news(&mut b),
        Template::Profile => profile(&mut b),
        Template::Map => map(&mut b),
    }
    b.gui
}

/// `count` GUIs with ids `gui_00000, ...`, cycling through the configured
/// templates.
pub fn gen_synthetic(seed: u64, count: usize, cfg: &SynthConfig) -> Vec<(String, Gui)> {
    let templates = if cfg.templates.is_empty() {
        Template::ALL.to_vec()
    } else {
        cfg.templates.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let t = templates[i % templates.len()];
            (format!("gui_{i:05}"), generate(t, &mut rng))
        })
        .collect()
}
