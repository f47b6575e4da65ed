"""
EdgeForge - Chart Generator
Renders loss curves and sweep series as PNG line charts using PIL/Pillow
"""

import io
import math
from typing import Dict, List, Optional, Sequence, Tuple

try:
    from PIL import Image, ImageDraw, ImageFont
    PIL_AVAILABLE = True
except ImportError:
    PIL_AVAILABLE = False


# Series palette
PALETTE = [0x5865F2, 0xED4245, 0x57F287, 0xFEE75C, 0xEB459E, 0x3BA55C, 0xFAA61A, 0x99AAB5]


def _get_font(size: int, bold: bool = False) -> 'ImageFont.FreeTypeFont':
    """Get a font, with fallback to default."""
    font_names = ['DejaVuSans.ttf', 'arial.ttf', 'Arial.ttf', 'FreeSans.ttf']
    if bold:
        font_names = ['DejaVuSans-Bold.ttf', 'arialbd.ttf', 'FreeSansBold.ttf'] + font_names
    for name in font_names:
        try:
            return ImageFont.truetype(name, size)
        except (OSError, IOError):
            continue
    return ImageFont.load_default()


def _hex_to_rgb(hex_color: int) -> Tuple[int, int, int]:
    return ((hex_color >> 16) & 0xFF, (hex_color >> 8) & 0xFF, hex_color & 0xFF)


def _format_tick(value: float) -> str:
    if value == 0:
        return "0"
    if abs(value) >= 1000 or abs(value) < 0.01:
        return f"{value:.1e}"
    return f"{value:.3g}"


def _bounds(series: Dict[str, Sequence[Tuple[float, float]]]):
    xs = [x for points in series.values() for x, _ in points if math.isfinite(x)]
    ys = [y for points in series.values() for _, y in points if math.isfinite(y)]
    if not xs or not ys:
        return 0.0, 1.0, 0.0, 1.0
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = (y1 - y0) * 0.05
    return x0, x1, y0 - pad, y1 + pad


def generate_line_chart(
    title: str,
    series: Dict[str, List[Tuple[float, float]]],
    x_label: str = "",
    y_label: str = "",
    width: int = 900,
    height: int = 500,
) -> Optional[bytes]:
    """Render named (x, y) series as a PNG line chart; None without Pillow."""
    if not PIL_AVAILABLE:
        return None

    img = Image.new('RGBA', (width, height), (44, 47, 51, 255))
    draw = ImageDraw.Draw(img)

    font_title = _get_font(22, bold=True)
    font_axis = _get_font(14)
    font_legend = _get_font(14)

    left, right, top, bottom = 80, width - 30, 60, height - 60
    draw.text((left, 18), title[:70], fill=(255, 255, 255), font=font_title)

    # Plot frame
    draw.rectangle([left, top, right, bottom], outline=(120, 120, 120))

    x0, x1, y0, y1 = _bounds(series)

    def to_px(x, y):
        px = left + (x - x0) / (x1 - x0) * (right - left)
        py = bottom - (y - y0) / (y1 - y0) * (bottom - top)
        return px, py

    # Grid + ticks
    for i in range(5):
        frac = i / 4
        yv = y0 + frac * (y1 - y0)
        _, py = to_px(x0, yv)
        draw.line([left, py, right, py], fill=(70, 72, 78))
        draw.text((8, py - 8), _format_tick(yv), fill=(180, 180, 180), font=font_axis)
        xv = x0 + frac * (x1 - x0)
        px, _ = to_px(xv, y0)
        draw.text((px - 12, bottom + 8), _format_tick(xv), fill=(180, 180, 180), font=font_axis)

    draw.text(((left + right) // 2 - 40, height - 28), x_label, fill=(200, 200, 200), font=font_axis)
    draw.text((8, top - 22), y_label, fill=(200, 200, 200), font=font_axis)

    # Lines + legend
    for i, (name, points) in enumerate(sorted(series.items())):
        color = _hex_to_rgb(PALETTE[i % len(PALETTE)])
        pixels = [to_px(x, y) for x, y in points if math.isfinite(x) and math.isfinite(y)]
        if len(pixels) > 1:
            draw.line(pixels, fill=color, width=2)
        for px, py in pixels:
            draw.ellipse([px - 2, py - 2, px + 2, py + 2], fill=color)

        ly = top + 8 + i * 20
        draw.rectangle([right - 170, ly + 4, right - 158, ly + 14], fill=color)
        draw.text((right - 150, ly), name[:20], fill=(230, 230, 230), font=font_legend)

    # Export
    buffer = io.BytesIO()
    img.save(buffer, format='PNG')
    buffer.seek(0)
    return buffer.getvalue()
