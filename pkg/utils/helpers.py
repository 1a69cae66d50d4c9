import time

_quiet = False

def set_quiet(quiet: bool):
  global _quiet
  _quiet = quiet

def print_highlighted(message:str):
  if _quiet:
    return
  print("#"*10)
  print(message)
  print("#"*10)

def log(message: str):
  if _quiet:
    return
  timestamp = time.strftime("%H:%M:%S", time.localtime())
  print(f"[{timestamp}] {message}")
