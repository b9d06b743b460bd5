import os

# tests never write rotating log files
os.environ.setdefault("LOG_TO_FILE", "false")
os.environ.setdefault("ENABLE_METRICS", "false")
