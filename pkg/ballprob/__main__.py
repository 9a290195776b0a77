"""
Invokes the ballprob command line when the package is run as a script.
"""

from ballprob.cli import main

if __name__ == "__main__":
    main()
