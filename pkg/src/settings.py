# This file is maintained for backward compatibility
# Load a local .env before the settings module reads the environment
from dotenv import load_dotenv

load_dotenv()

from src.services.settings import *  # noqa: E402,F401,F403
