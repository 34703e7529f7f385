from dcrnet.cli import main

main()
