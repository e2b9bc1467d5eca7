__version__ = "0.4.0"

if __name__ == "__main__":
    print(__version__)
