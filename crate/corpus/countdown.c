/*@ requires n >= 0; */
int countdown(int n) {
    int i = n;
    while (i > 0) {
        i = i - 1;
    }
    /*@ assert i == 0; */
    return i;
}
