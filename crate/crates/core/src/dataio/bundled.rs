//! Published daily confirmed-case tables for four early COVID-19 outbreaks.
//!
//! China is stored as reported, including the 15,200 spike on 13 February;
//! running [`super::qc_correct`] over it yields the corrected table.

use chrono::{Days, NaiveDate};

use super::{CaseSeries, DataError};

pub const BUNDLED_NAMES: [&str; 4] = ["china", "italy", "south_korea", "uk"];

// Daily increments, day 1 onwards (day 0 is zero). WHO reports.
const CHINA_INCREMENTS: [u32; 45] = [
    261, 261, 462, 688, 776, 1800, 1500, 1700, 2000, 2100, 2600, 2800, 3200, 3900, 3700, 3200,
    3400, 2700, 3000, 2500, 2000, 15200, 4000, 2600, 2000, 2100, 1900, 1800, 396, 892, 825, 649,
    221, 517, 412, 439, 329, 435, 574, 206, 129, 119, 143, 145, 103,
];

// Cumulative counts, day 0 onwards. Italian Civil Protection.
const ITALY_CUMULATIVE: [u32; 33] = [
    0, 7, 128, 229, 322, 400, 528, 888, 1128, 1694, 2024, 2502, 3089, 3858, 4636, 5883, 7375, 9172,
    10149, 12462, 15113, 17660, 21157, 24747, 27980, 31506, 35713, 41035, 47021, 53378, 59138,
    63927, 69176,
];

const SOUTH_KOREA_CUMULATIVE: [u32; 34] = [
    0, 27, 80, 178, 405, 571, 802, 946, 1230, 1735, 2306, 3119, 3705, 4304, 5155, 5590, 6253, 6562,
    7010, 7282, 7447, 7482, 7724, 7838, 7948, 8055, 8131, 8205, 8289, 8382, 8534, 8773, 8920, 9018,
];

const UK_CUMULATIVE: [u32; 27] = [
    0, 3, 7, 10, 23, 26, 38, 74, 103, 151, 196, 265, 308, 370, 447, 577, 785, 1127, 1378, 1530,
    1937, 2613, 3256, 3970, 5005, 5670, 6637,
];

/// Returns one of the bundled tables by name (see [`BUNDLED_NAMES`]).
pub fn bundled_dataset(name: &str) -> Result<CaseSeries, DataError> {
    let (start, cumulative): ((i32, u32, u32), Vec<f64>) = match name {
        "china" => {
            let mut cum = vec![0.0];
            let mut total = 0.0;
            for inc in CHINA_INCREMENTS {
                total += f64::from(inc);
                cum.push(total);
            }
            ((2020, 1, 22), cum)
        }
        "italy" => ((2020, 2, 21), to_f64(&ITALY_CUMULATIVE)),
        "south_korea" => ((2020, 2, 18), to_f64(&SOUTH_KOREA_CUMULATIVE)),
        "uk" => ((2020, 2, 26), to_f64(&UK_CUMULATIVE)),
        _ => {
            return Err(DataError::UnknownDataset {
                name: name.to_string(),
            })
        }
    };
    let day0 = NaiveDate::from_ymd_opt(start.0, start.1, start.2).expect("valid calendar date");
    let dates = (0..cumulative.len() as u64)
        .map(|i| day0.checked_add_days(Days::new(i)))
        .collect();
    Ok(CaseSeries::with_dates(name, 0, dates, cumulative))
}

fn to_f64(values: &[u32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v)).collect()
}
