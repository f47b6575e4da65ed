"""
ANSI Color Codes and Console Logging for EdgeForge
Tagged, colored console lines for training runs and CLI output
"""

import sys

from utils.config import Config


class Colors:
    """Terminal color codes for console output"""
    RESET = '\033[0m'
    BOLD = '\033[1m'

    # Basic colors
    RED = '\033[31m'
    GREEN = '\033[32m'
    YELLOW = '\033[33m'
    BLUE = '\033[34m'
    MAGENTA = '\033[35m'
    CYAN = '\033[36m'
    WHITE = '\033[37m'

    # Bright colors
    BRIGHT_BLACK = '\033[90m'
    BRIGHT_CYAN = '\033[96m'


# =============================================================================
# LOG LINES
# =============================================================================

def _emit(color, tag, msg, stream=None):
    print(f"{color}[{tag}] {msg}{Colors.RESET}", file=stream or sys.stderr)


def log_info(msg):
    _emit(Colors.CYAN, 'INFO', msg)


def log_success(msg):
    _emit(Colors.GREEN, '✓', msg)


def log_warning(msg):
    _emit(Colors.YELLOW, 'WARN', msg)


def log_error(msg):
    _emit(Colors.RED, 'ERROR', msg)


def log_debug(msg):
    if Config.DEBUG_MODE:
        _emit(Colors.BRIGHT_BLACK, 'DEBUG', msg)


def log_tagged(tag, msg, color=Colors.MAGENTA):
    """Log under a custom tag such as OES, EPOCH or DATABASE"""
    _emit(color, tag, msg)


# =============================================================================
# FORMATTING FUNCTIONS
# =============================================================================

def format_error(error_msg, error_code):
    """Format an error message with code"""
    return f"{Colors.RED}Error: {error_msg} {Colors.BRIGHT_BLACK}(ERR-{error_code}){Colors.RESET}"


def format_key_value(key, value):
    """Format a key-value pair"""
    return f"{Colors.YELLOW}{key}:{Colors.RESET} {Colors.WHITE}{value}{Colors.RESET}"


def format_section_header(title):
    """Format a section header"""
    return f"\n{Colors.BRIGHT_CYAN}━━━ {title} ━━━{Colors.RESET}\n"


def format_table_row(columns, widths=None):
    """Format a table row with optional column widths"""
    if widths is None:
        widths = [15] * len(columns)

    formatted = ""
    for i, col in enumerate(columns):
        width = widths[i] if i < len(widths) else 15
        formatted += str(col).ljust(width)

    return formatted


def format_status(status, text):
    """Format status indicator (ok, warn, error)"""
    if status in ("ok", "success"):
        return f"{Colors.GREEN}✓{Colors.RESET} {text}"
    elif status in ("warn", "warning"):
        return f"{Colors.YELLOW}⚠{Colors.RESET} {text}"
    elif status in ("error", "fail"):
        return f"{Colors.RED}✗{Colors.RESET} {text}"
    return f"{Colors.BRIGHT_BLACK}○{Colors.RESET} {text}"


def create_progress_bar(percentage, width=30):
    """Create a progress bar for epoch/seed loops"""
    percentage = max(0, min(100, int(percentage)))
    filled = int((percentage / 100) * width)
    bar = '█' * filled + '░' * (width - filled)

    if percentage < 30:
        color = Colors.RED
    elif percentage < 70:
        color = Colors.YELLOW
    else:
        color = Colors.GREEN

    return f"{color}[{bar}] {percentage}%{Colors.RESET}"
