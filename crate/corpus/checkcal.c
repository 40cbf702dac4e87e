struct CheckCal {
    int pkv[10];
    int len;
    int chksum;
};

/*@ requires 0 <= pIp->len <= 10; */
void CheckCalFun(struct CheckCal *pIp) {
    int chksum = 0;
    int i = 0;
    for (; i < pIp->len; i++) {
        chksum += pIp->pkv[i];
    }
    pIp->chksum = chksum;
}

/*@ requires 0 <= pIp->len <= 10; */
void foo(struct CheckCal *pIp) {
    CheckCalFun(pIp);
    /*@ assert pIp->chksum == \sum(0, pIp->len - 1, k |-> pIp->pkv[k]); */
}
