//! Demographic, geographic and industry code lists.
//!
//! Census divisions and the 20 NAICS 2017 sectors follow the standard
//! published definitions. The 20 analysis groups are the cross of nativity,
//! sex and race/ethnicity; group 0 is native-born White Non-Hispanic males.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn code(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            other => Err(format!("unknown sex `{other}`")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RaceEth {
    AsianNH,
    BlackNH,
    WhiteHisp,
    WhiteNH,
    AllOther,
}

impl RaceEth {
    pub const ALL: [RaceEth; 5] = [
        RaceEth::AsianNH,
        RaceEth::BlackNH,
        RaceEth::WhiteHisp,
        RaceEth::WhiteNH,
        RaceEth::AllOther,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RaceEth::AsianNH => "AsianNH",
            RaceEth::BlackNH => "BlackNH",
            RaceEth::WhiteHisp => "WhiteHisp",
            RaceEth::WhiteNH => "WhiteNH",
            RaceEth::AllOther => "AllOther",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RaceEth::AsianNH => "Asian Non-Hispanic",
            RaceEth::BlackNH => "Black Non-Hispanic",
            RaceEth::WhiteHisp => "White Hispanic",
            RaceEth::WhiteNH => "White Non-Hispanic",
            RaceEth::AllOther => "All Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for RaceEth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RaceEth::ALL
            .into_iter()
            .find(|r| r.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown race_eth `{}`", s.trim()))
    }
}

impl fmt::Display for RaceEth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Education {
    LTHS,
    HS,
    SomeCollege,
    BAplus,
}

impl Education {
    pub const ALL: [Education; 4] = [
        Education::LTHS,
        Education::HS,
        Education::SomeCollege,
        Education::BAplus,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Education::LTHS => "LTHS",
            Education::HS => "HS",
            Education::SomeCollege => "SomeCollege",
            Education::BAplus => "BAplus",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Education {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Education::ALL
            .into_iter()
            .find(|e| e.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown education `{}`", s.trim()))
    }
}

impl fmt::Display for Education {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// NAICS 2017 industry sector, letters A through T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sector(u8);

impl Sector {
    pub const COUNT: usize = 20;

    const TABLE: [(&'static str, &'static str); 20] = [
        ("11", "Agriculture, Forestry, Fishing and Hunting"),
        ("21", "Mining, Quarrying, and Oil and Gas Extraction"),
        ("22", "Utilities"),
        ("23", "Construction"),
        ("31-33", "Manufacturing"),
        ("42", "Wholesale Trade"),
        ("44-45", "Retail Trade"),
        ("48-49", "Transportation and Warehousing"),
        ("51", "Information"),
        ("52", "Finance and Insurance"),
        ("53", "Real Estate and Rental and Leasing"),
        ("54", "Professional, Scientific, and Technical Services"),
        ("55", "Management of Companies and Enterprises"),
        (
            "56",
            "Administrative and Support and Waste Management and Remediation Services",
        ),
        ("61", "Educational Services"),
        ("62", "Health Care and Social Assistance"),
        ("71", "Arts, Entertainment, and Recreation"),
        ("72", "Accommodation and Food Services"),
        ("81", "Other Services (exc. Public Administration)"),
        ("92", "Public Administration"),
    ];

    pub fn from_index(i: usize) -> Option<Sector> {
        (i < Self::COUNT).then_some(Sector(i as u8))
    }

    pub fn all() -> impl Iterator<Item = Sector> {
        (0..Self::COUNT as u8).map(Sector)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }

    pub fn naics(self) -> &'static str {
        Self::TABLE[self.index()].0
    }

    pub fn name(self) -> &'static str {
        Self::TABLE[self.index()].1
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let b = t.as_bytes();
        if b.len() == 1 && b[0].to_ascii_uppercase().is_ascii_uppercase() {
            if let Some(sec) = Sector::from_index((b[0].to_ascii_uppercase() - b'A') as usize) {
                return Ok(sec);
            }
        }
        Err(format!("unknown industry sector `{t}` (expected A-T)"))
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Census division number 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Division(u8);

impl Division {
    pub const COUNT: usize = 9;

    const NAMES: [&'static str; 9] = [
        "New England",
        "Middle Atlantic",
        "East North Central",
        "West North Central",
        "South Atlantic",
        "East South Central",
        "West South Central",
        "Mountain",
        "Pacific",
    ];

    pub fn new(number: u8) -> Option<Division> {
        (1..=9).contains(&number).then_some(Division(number))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based position, for indicator columns.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

impl fmt::Display for Division {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const STATE_DIVISIONS: [(&str, u8); 51] = [
    ("CT", 1),
    ("ME", 1),
    ("MA", 1),
    ("NH", 1),
    ("RI", 1),
    ("VT", 1),
    ("NJ", 2),
    ("NY", 2),
    ("PA", 2),
    ("IN", 3),
    ("IL", 3),
    ("MI", 3),
    ("OH", 3),
    ("WI", 3),
    ("IA", 4),
    ("KS", 4),
    ("MN", 4),
    ("MO", 4),
    ("NE", 4),
    ("ND", 4),
    ("SD", 4),
    ("DE", 5),
    ("DC", 5),
    ("FL", 5),
    ("GA", 5),
    ("MD", 5),
    ("NC", 5),
    ("SC", 5),
    ("VA", 5),
    ("WV", 5),
    ("AL", 6),
    ("KY", 6),
    ("MS", 6),
    ("TN", 6),
    ("AR", 7),
    ("LA", 7),
    ("OK", 7),
    ("TX", 7),
    ("AZ", 8),
    ("CO", 8),
    ("ID", 8),
    ("NM", 8),
    ("MT", 8),
    ("UT", 8),
    ("NV", 8),
    ("WY", 8),
    ("AK", 9),
    ("CA", 9),
    ("HI", 9),
    ("OR", 9),
    ("WA", 9),
];

/// Two-letter state code (50 states plus DC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State(u8);

impl State {
    pub const COUNT: usize = STATE_DIVISIONS.len();

    pub fn all() -> impl Iterator<Item = State> {
        (0..Self::COUNT as u8).map(State)
    }

    pub fn from_index(i: usize) -> Option<State> {
        (i < Self::COUNT).then_some(State(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn code(self) -> &'static str {
        STATE_DIVISIONS[self.index()].0
    }

    pub fn division(self) -> Division {
        Division(STATE_DIVISIONS[self.index()].1)
    }
}

impl FromStr for State {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        // "DL" appears for Delaware in some published division tables.
        let code = if up == "DL" { "DE" } else { up.as_str() };
        STATE_DIVISIONS
            .iter()
            .position(|(c, _)| *c == code)
            .map(|i| State(i as u8))
            .ok_or_else(|| format!("unknown state `{}`", s.trim()))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One of the 20 demographic analysis groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Group {
    pub foreign_born: bool,
    pub sex: Sex,
    pub race_eth: RaceEth,
}

impl Group {
    pub const COUNT: usize = 20;

    pub const REFERENCE: Group = Group {
        foreign_born: false,
        sex: Sex::Male,
        race_eth: RaceEth::WhiteNH,
    };

    /// All groups in published table order: foreign-born females, foreign-born
    /// males, native-born females, native-born males; race/ethnicity within.
    pub fn table_order() -> impl Iterator<Item = Group> {
        [true, false].into_iter().flat_map(|foreign_born| {
            [Sex::Female, Sex::Male].into_iter().flat_map(move |sex| {
                RaceEth::ALL.into_iter().map(move |race_eth| Group {
                    foreign_born,
                    sex,
                    race_eth,
                })
            })
        })
    }

    /// Group id: 0 for the reference group, 1..=19 for the others in table order.
    pub fn id(self) -> usize {
        if self == Self::REFERENCE {
            return 0;
        }
        let pos = self.table_position();
        let ref_pos = Self::REFERENCE.table_position();
        if pos < ref_pos {
            pos + 1
        } else {
            pos
        }
    }

    pub fn from_id(id: usize) -> Option<Group> {
        if id == 0 {
            return Some(Self::REFERENCE);
        }
        Self::table_order()
            .filter(|g| *g != Self::REFERENCE)
            .nth(id - 1)
    }

    fn table_position(self) -> usize {
        let nat = if self.foreign_born { 0 } else { 2 };
        let sex = match self.sex {
            Sex::Female => 0,
            Sex::Male => 1,
        };
        (nat + sex) * 5 + self.race_eth.index()
    }

    pub fn nativity(self) -> &'static str {
        if self.foreign_born {
            "foreign_born"
        } else {
            "native_born"
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.nativity(), self.sex, self.race_eth)
    }
}
