import logging
import sys
from pathlib import Path
from typing import Optional

from app.config.settings import settings


class Logger:
    """Singleton logger for the entire application."""
    
    _instance: Optional["Logger"] = None
    _initialized: bool = False
    
    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance
    
    def __init__(self):
        if Logger._initialized:
            return
        
        self.logger = logging.getLogger("vawe")
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self._console_handler: Optional[logging.Handler] = None
        
        # Evitar duplicação de handlers
        if not self.logger.handlers:
            self._setup_handlers()
        
        Logger._initialized = True
    
    def _setup_handlers(self):
        """Setup stderr and optional file handlers.
        
        stdout carries JSON reports and mined triplets, so the console
        handler always writes to stderr.
        """
        formatter = logging.Formatter(
            fmt='%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(getattr(logging, settings.LOG_LEVEL.upper(), logging.WARNING))
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)
        self._console_handler = console_handler
        
        if settings.LOG_FILE:
            log_path = Path(settings.LOG_FILE)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)
    
    def set_verbose(self, verbose: bool):
        """Stream INFO records (per-epoch rows) to stderr when verbose."""
        if self._console_handler is None:
            return
        level = logging.INFO if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.WARNING)
        self._console_handler.setLevel(level)
    
    # Convenience methods
    def info(self, message: str, **kwargs):
        self.logger.info(message, stacklevel=2, **kwargs)
    
    def debug(self, message: str, **kwargs):
        self.logger.debug(message, stacklevel=2, **kwargs)
    
    def warning(self, message: str, **kwargs):
        self.logger.warning(message, stacklevel=2, **kwargs)


# Global singleton instance
logger = Logger()
