//! Single-band GeoTIFF reading and writing on top of the `tiff` crate.
//!
//! Georeferencing is carried by ModelPixelScale + ModelTiepoint (or a
//! ModelTransformation matrix on read), the GeoKey directory, and the GDAL
//! ASCII nodata tag. Files are always written as uncompressed float32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::colortype::Gray32Float;
use tiff::encoder::TiffEncoder;
use tiff::tags::Tag;

use crate::error::{Error, Result};
use crate::raster::{Crs, GeoTransform, RasterGrid, DEFAULT_NODATA};

const GT_MODEL_TYPE: u16 = 1024;
const GT_RASTER_TYPE: u16 = 1025;
const GEOGRAPHIC_TYPE: u16 = 2048;
const PROJECTED_CS_TYPE: u16 = 3072;
const PCS_CITATION: u16 = 3073;

const MODEL_TYPE_PROJECTED: u16 = 1;
const MODEL_TYPE_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_AREA: u16 = 1;
const USER_DEFINED: u16 = 32767;
const GEO_ASCII_PARAMS_TAG: u16 = 34737;

pub fn read_geotiff(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::input(path, e))?;
    decode(BufReader::new(file)).map_err(|reason| Error::input(path, reason))
}

pub fn write_geotiff(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::output(path, e))?;
    let mut writer = BufWriter::new(file);
    encode(grid, &mut writer).map_err(|reason| Error::output(path, reason))?;
    writer.flush().map_err(|e| Error::output(path, e))
}

/// Encodes `grid` into an in-memory GeoTIFF.
pub fn encode_geotiff(grid: &RasterGrid) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    encode(grid, &mut cursor).map_err(|reason| Error::output("<memory>", reason))?;
    Ok(cursor.into_inner())
}

pub fn decode_geotiff(bytes: &[u8]) -> Result<RasterGrid> {
    decode(std::io::Cursor::new(bytes)).map_err(|reason| Error::input("<memory>", reason))
}

fn encode<W: Write + Seek>(grid: &RasterGrid, writer: W) -> std::result::Result<(), String> {
    let width = u32::try_from(grid.cols()).map_err(|_| "grid too wide for TIFF")?;
    let height = u32::try_from(grid.rows()).map_err(|_| "grid too tall for TIFF")?;
    let t = grid.transform();
    let (geokeys, ascii) = geokey_directory(grid.crs())?;
    let nodata32 = grid.nodata() as f32;
    let data: Vec<f32> = grid
        .values()
        .iter()
        .map(|&v| if grid.is_nodata(v) { nodata32 } else { v as f32 })
        .collect();

    let mut encoder = TiffEncoder::new(writer).map_err(|e| e.to_string())?;
    let mut image = encoder
        .new_image::<Gray32Float>(width, height)
        .map_err(|e| e.to_string())?;
    let dir = image.encoder();
    let tag_err = |e: tiff::TiffError| e.to_string();
    dir.write_tag(Tag::ModelPixelScaleTag, &[t.pixel_width, t.pixel_height, 0.0][..])
        .map_err(tag_err)?;
    dir.write_tag(Tag::ModelTiepointTag, &[0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0][..])
        .map_err(tag_err)?;
    dir.write_tag(Tag::GeoKeyDirectoryTag, &geokeys[..]).map_err(tag_err)?;
    if let Some(ascii) = &ascii {
        dir.write_tag(Tag::GeoAsciiParamsTag, ascii.as_str()).map_err(tag_err)?;
    }
    dir.write_tag(Tag::GdalNodata, format_nodata(grid.nodata()).as_str())
        .map_err(tag_err)?;
    image.write_data(&data).map_err(|e| e.to_string())
}

/// Shortest decimal text that parses back to the same `f64`.
fn format_nodata(nodata: f64) -> String {
    if nodata.is_nan() {
        "nan".to_string()
    } else {
        format!("{nodata}")
    }
}

fn geokey_directory(crs: &Crs) -> std::result::Result<(Vec<u16>, Option<String>), String> {
    let mut keys: Vec<[u16; 4]> = vec![[GT_RASTER_TYPE, 0, 1, RASTER_PIXEL_IS_AREA]];
    let mut ascii = None;
    match crs {
        Crs::Geographic => {
            keys.push([GT_MODEL_TYPE, 0, 1, MODEL_TYPE_GEOGRAPHIC]);
            keys.push([GEOGRAPHIC_TYPE, 0, 1, 4326]);
        }
        Crs::Projected(id) => {
            keys.push([GT_MODEL_TYPE, 0, 1, MODEL_TYPE_PROJECTED]);
            match crs.epsg_code() {
                Some(code) => keys.push([PROJECTED_CS_TYPE, 0, 1, code]),
                None => {
                    if !id.is_ascii() || id.contains('|') || id.contains('\0') {
                        return Err(format!("CRS identifier `{id}` cannot be stored as GeoTIFF ASCII"));
                    }
                    let len = u16::try_from(id.len() + 1).map_err(|_| "CRS identifier too long")?;
                    keys.push([PROJECTED_CS_TYPE, 0, 1, USER_DEFINED]);
                    keys.push([PCS_CITATION, GEO_ASCII_PARAMS_TAG, len, 0]);
                    ascii = Some(format!("{id}|"));
                }
            }
        }
    }
    keys.sort_by_key(|k| k[0]);
    let mut dir = vec![1, 1, 0, keys.len() as u16];
    dir.extend(keys.iter().flatten());
    Ok((dir, ascii))
}

fn decode<R: Read + Seek>(reader: R) -> std::result::Result<RasterGrid, String> {
    let mut decoder = Decoder::new(reader)
        .map_err(|e| format!("not a readable TIFF: {e}"))?
        .with_limits(Limits::unlimited());

    let samples = decoder
        .find_tag_unsigned::<u16>(Tag::SamplesPerPixel)
        .map_err(|e| e.to_string())?
        .unwrap_or(1);
    if samples != 1 {
        return Err(format!("multi-band unsupported ({samples} samples per pixel)"));
    }
    let (width, height) = decoder.dimensions().map_err(|e| e.to_string())?;
    let transform = read_transform(&mut decoder)?;
    let crs = read_crs(&mut decoder)?;
    let nodata = match decoder.find_tag(Tag::GdalNodata).map_err(|e| e.to_string())? {
        Some(value) => {
            let text = value.into_string().map_err(|e| e.to_string())?;
            let text = text.trim_matches(|c: char| c == '\0' || c.is_whitespace());
            text.parse::<f64>()
                .map_err(|_| format!("unparsable nodata tag `{text}`"))?
        }
        None => DEFAULT_NODATA,
    };

    let image = decoder.read_image().map_err(|e| e.to_string())?;
    let (mut values, is_f32) = widen(image)?;
    let nodata_in_file = if is_f32 { nodata as f32 as f64 } else { nodata };
    for v in &mut values {
        if *v == nodata_in_file || !v.is_finite() {
            *v = nodata;
        }
    }
    RasterGrid::new(height as usize, width as usize, transform, crs, nodata, values).map_err(|e| e.to_string())
}

fn widen(image: DecodingResult) -> std::result::Result<(Vec<f64>, bool), String> {
    fn conv<T: Copy + Into<f64>>(v: Vec<T>) -> Vec<f64> {
        v.into_iter().map(Into::into).collect()
    }
    Ok(match image {
        DecodingResult::U8(v) => (conv(v), false),
        DecodingResult::U16(v) => (conv(v), false),
        DecodingResult::U32(v) => (conv(v), false),
        DecodingResult::I8(v) => (conv(v), false),
        DecodingResult::I16(v) => (conv(v), false),
        DecodingResult::I32(v) => (conv(v), false),
        DecodingResult::F32(v) => (conv(v), true),
        DecodingResult::F64(v) => (v, false),
        DecodingResult::U64(_) | DecodingResult::I64(_) => {
            return Err("unsupported sample format: 64-bit integer".into())
        }
        DecodingResult::F16(_) => return Err("unsupported sample format: float16".into()),
    })
}

fn f64_tag<R: Read + Seek>(decoder: &mut Decoder<R>, tag: Tag) -> std::result::Result<Option<Vec<f64>>, String> {
    decoder
        .find_tag(tag)
        .map_err(|e| e.to_string())?
        .map(|v| v.into_f64_vec().map_err(|e| e.to_string()))
        .transpose()
}

fn read_transform<R: Read + Seek>(decoder: &mut Decoder<R>) -> std::result::Result<GeoTransform, String> {
    let scale = f64_tag(decoder, Tag::ModelPixelScaleTag)?;
    let tiepoint = f64_tag(decoder, Tag::ModelTiepointTag)?;
    let transform = match (scale, tiepoint) {
        (Some(s), Some(tp)) if s.len() >= 2 && tp.len() >= 6 => GeoTransform {
            origin_x: tp[3] - tp[0] * s[0],
            origin_y: tp[4] + tp[1] * s[1],
            pixel_width: s[0],
            pixel_height: s[1].abs(),
        },
        _ => match f64_tag(decoder, Tag::ModelTransformationTag)? {
            Some(m) if m.len() >= 16 => {
                if m[1] != 0.0 || m[4] != 0.0 {
                    return Err("rotated geotransforms are unsupported".into());
                }
                GeoTransform {
                    origin_x: m[3],
                    origin_y: m[7],
                    pixel_width: m[0],
                    pixel_height: -m[5],
                }
            }
            _ => return Err("missing georeferencing (no tiepoint+scale or transformation tags)".into()),
        },
    };
    transform.validate().map_err(|e| e.to_string())?;
    Ok(transform)
}

fn read_crs<R: Read + Seek>(decoder: &mut Decoder<R>) -> std::result::Result<Crs, String> {
    let Some(dir) = decoder
        .find_tag(Tag::GeoKeyDirectoryTag)
        .map_err(|e| e.to_string())?
        .map(|v| v.into_u16_vec().map_err(|e| e.to_string()))
        .transpose()?
    else {
        return Ok(Crs::Geographic);
    };
    let ascii = decoder
        .find_tag(Tag::GeoAsciiParamsTag)
        .map_err(|e| e.to_string())?
        .map(|v| v.into_string().map_err(|e| e.to_string()))
        .transpose()?
        .unwrap_or_default();

    let mut model_type = None;
    let mut projected_code = None;
    let mut citation = None;
    for key in dir.get(4..).unwrap_or(&[]).chunks_exact(4) {
        let (id, location, count, value) = (key[0], key[1], key[2] as usize, key[3] as usize);
        match (id, location) {
            (GT_MODEL_TYPE, 0) => model_type = Some(key[3]),
            (PROJECTED_CS_TYPE, 0) => projected_code = Some(key[3]),
            (PCS_CITATION, GEO_ASCII_PARAMS_TAG) => {
                citation = ascii
                    .get(value..value + count)
                    .map(|s| s.trim_end_matches(['|', '\0']).to_string());
            }
            _ => {}
        }
    }
    Ok(match model_type {
        Some(MODEL_TYPE_PROJECTED) => match projected_code {
            Some(code) if code != USER_DEFINED && code != 0 => Crs::Projected(format!("EPSG:{code}")),
            _ => Crs::Projected(citation.unwrap_or_else(|| "user-defined".into())),
        },
        Some(MODEL_TYPE_GEOGRAPHIC) | None => Crs::Geographic,
        Some(other) => return Err(format!("unsupported GeoTIFF model type {other}")),
    })
}
